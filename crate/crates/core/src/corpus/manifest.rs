//! Line-delimited JSON manifest, one image per line.
//!
//! Field set per line: `id, source_path, title, metadata, width_px, height_px,
//! status, rejection_reason?, caption?` where `caption` holds `text,
//! token_count, word_count, model_id, prompt_id`. Parsing is strict: missing or
//! unknown fields are errors, reported with their 1-based line number.
//!
//! Ingestion progress is appended to a sidecar journal (`<manifest>.journal`)
//! after every completed item; [`Manifest::load_resumable`] replays it and
//! [`ManifestJournal::compact`] folds it back into the manifest.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::record::{word_count, Caption, ImageRecord, Status};
use super::CorpusError;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CaptionLine {
    text: String,
    token_count: u32,
    word_count: u32,
    model_id: String,
    prompt_id: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestLine {
    id: String,
    source_path: String,
    title: String,
    metadata: BTreeMap<String, String>,
    width_px: u32,
    height_px: u32,
    status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rejection_reason: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    caption: Option<CaptionLine>,
}

/// One manifest line: the record and its caption, if any.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub record: ImageRecord,
    pub caption: Option<Caption>,
}

impl ManifestEntry {
    pub fn new(record: ImageRecord) -> Self {
        ManifestEntry {
            record,
            caption: None,
        }
    }

    /// Checks the status/caption/rejection invariants of a single entry.
    pub fn validate(&self) -> Result<(), String> {
        let r = &self.record;
        if r.id.is_empty() {
            return Err("empty id".into());
        }
        if r.width_px == 0 || r.height_px == 0 {
            return Err("dimensions must be positive".into());
        }
        match r.status {
            Status::Pending => {
                if self.caption.is_some() {
                    return Err("pending record carries a caption".into());
                }
            }
            Status::Rejected => {
                if r.rejection_reason.as_deref().map_or(true, str::is_empty) {
                    return Err("rejected record lacks a rejection reason".into());
                }
                if self.caption.is_some() {
                    return Err("rejected record carries a caption".into());
                }
            }
            Status::Captioned | Status::Embedded => {
                if self.caption.is_none() {
                    return Err(format!("{} record lacks a caption", r.status.as_str()));
                }
            }
        }
        if r.status != Status::Rejected && r.rejection_reason.is_some() {
            return Err("rejection reason on a non-rejected record".into());
        }
        if let Some(c) = &self.caption {
            if c.image_id != r.id {
                return Err("caption image id differs from record id".into());
            }
            if c.word_count != word_count(&c.text) {
                return Err(format!(
                    "word_count {} does not match caption text ({} words)",
                    c.word_count,
                    word_count(&c.text)
                ));
            }
        }
        Ok(())
    }

    fn from_line(line: ManifestLine) -> Self {
        let caption = line.caption.map(|c| Caption {
            image_id: line.id.clone(),
            text: c.text,
            token_count: c.token_count,
            word_count: c.word_count,
            model_id: c.model_id,
            prompt_id: c.prompt_id,
        });
        ManifestEntry {
            record: ImageRecord {
                id: line.id,
                source_path: line.source_path,
                title: line.title,
                metadata: line.metadata,
                width_px: line.width_px,
                height_px: line.height_px,
                status: line.status,
                rejection_reason: line.rejection_reason,
            },
            caption,
        }
    }

    fn to_line(&self) -> ManifestLine {
        let r = &self.record;
        ManifestLine {
            id: r.id.clone(),
            source_path: r.source_path.clone(),
            title: r.title.clone(),
            metadata: r.metadata.clone(),
            width_px: r.width_px,
            height_px: r.height_px,
            status: r.status,
            rejection_reason: r.rejection_reason.clone(),
            caption: self.caption.as_ref().map(|c| CaptionLine {
                text: c.text.clone(),
                token_count: c.token_count,
                word_count: c.word_count,
                model_id: c.model_id.clone(),
                prompt_id: c.prompt_id.clone(),
            }),
        }
    }

    /// Serializes the entry as one manifest line (no trailing newline).
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(&self.to_line()).expect("manifest line serializes")
    }
}

/// Ordered manifest entries with unique ids.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Manifest {
    entries: Vec<ManifestEntry>,
    index: HashMap<String, usize>,
}

impl Manifest {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_entries(entries: Vec<ManifestEntry>) -> Result<Self, CorpusError> {
        let mut m = Manifest::new();
        for (i, e) in entries.into_iter().enumerate() {
            m.push_checked(e, i + 1)?;
        }
        Ok(m)
    }

    fn push_checked(&mut self, entry: ManifestEntry, line: usize) -> Result<(), CorpusError> {
        if let Err(message) = entry.validate() {
            return Err(CorpusError::InvalidRecord {
                id: entry.record.id.clone(),
                line,
                message,
            });
        }
        if self.index.contains_key(&entry.record.id) {
            return Err(CorpusError::DuplicateId {
                id: entry.record.id.clone(),
                line,
            });
        }
        self.index.insert(entry.record.id.clone(), self.entries.len());
        self.entries.push(entry);
        Ok(())
    }

    /// Appends a new entry; fails on an invalid entry or a duplicate id.
    pub fn push(&mut self, entry: ManifestEntry) -> Result<(), CorpusError> {
        let line = self.entries.len() + 1;
        self.push_checked(entry, line)
    }

    /// Replaces the entry with the same id.
    pub fn update(&mut self, entry: ManifestEntry) -> Result<(), CorpusError> {
        let Some(&pos) = self.index.get(&entry.record.id) else {
            return Err(CorpusError::DanglingReference {
                what: "manifest update".into(),
                id: entry.record.id.clone(),
            });
        };
        entry.validate().map_err(|message| CorpusError::Inconsistent {
            id: entry.record.id.clone(),
            message,
        })?;
        self.entries[pos] = entry;
        Ok(())
    }

    pub fn entries(&self) -> &[ManifestEntry] {
        &self.entries
    }

    pub fn get(&self, id: &str) -> Option<&ManifestEntry> {
        self.index.get(id).map(|&i| &self.entries[i])
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn records(&self) -> impl Iterator<Item = &ImageRecord> {
        self.entries.iter().map(|e| &e.record)
    }

    pub fn captions(&self) -> impl Iterator<Item = &Caption> {
        self.entries.iter().filter_map(|e| e.caption.as_ref())
    }

    pub fn into_entries(self) -> Vec<ManifestEntry> {
        self.entries
    }

    /// Loads `path` and replays `<path>.journal` on top of it, if present.
    ///
    /// Journal entries for ids absent from the manifest are appended.
    pub fn load_resumable(path: &Path) -> Result<Self, CorpusError> {
        let mut manifest = load_manifest(path)?;
        let journal = ManifestJournal::journal_path(path);
        if journal.exists() {
            for (line, entry) in read_lines(&journal)? {
                if manifest.index.contains_key(&entry.record.id) {
                    manifest.update(entry).map_err(|e| match e {
                        CorpusError::Inconsistent { id, message } => {
                            CorpusError::InvalidRecord { id, line, message }
                        }
                        other => other,
                    })?;
                } else {
                    manifest.push_checked(entry, line)?;
                }
            }
        }
        Ok(manifest)
    }
}

fn read_lines(path: &Path) -> Result<Vec<(usize, ManifestEntry)>, CorpusError> {
    let file = File::open(path).map_err(|e| CorpusError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| CorpusError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: ManifestLine =
            serde_json::from_str(&line).map_err(|e| CorpusError::MalformedLine {
                line: line_no,
                message: e.to_string(),
            })?;
        out.push((line_no, ManifestEntry::from_line(parsed)));
    }
    Ok(out)
}

/// Reads a manifest strictly, preserving line order.
pub fn load_manifest(path: &Path) -> Result<Manifest, CorpusError> {
    let mut manifest = Manifest::new();
    for (line, entry) in read_lines(path)? {
        manifest.push_checked(entry, line)?;
    }
    Ok(manifest)
}

/// Writes the manifest atomically (temp file + rename).
pub fn save_manifest(manifest: &Manifest, path: &Path) -> Result<(), CorpusError> {
    let tmp = path.with_extension("jsonl.tmp");
    {
        let file = File::create(&tmp).map_err(|e| CorpusError::io(&tmp, e))?;
        let mut w = BufWriter::new(file);
        for e in &manifest.entries {
            writeln!(w, "{}", e.to_json_line()).map_err(|e| CorpusError::io(&tmp, e))?;
        }
        w.flush().map_err(|e| CorpusError::io(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| CorpusError::io(path, e))
}

/// Append-only progress log next to a manifest.
#[derive(Debug)]
pub struct ManifestJournal {
    manifest_path: PathBuf,
    journal_path: PathBuf,
    file: File,
}

impl ManifestJournal {
    pub fn journal_path(manifest: &Path) -> PathBuf {
        let mut name = manifest.file_name().unwrap_or_default().to_os_string();
        name.push(".journal");
        manifest.with_file_name(name)
    }

    pub fn open(manifest_path: &Path) -> Result<Self, CorpusError> {
        let journal_path = Self::journal_path(manifest_path);
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&journal_path)
            .map_err(|e| CorpusError::io(&journal_path, e))?;
        Ok(ManifestJournal {
            manifest_path: manifest_path.to_path_buf(),
            journal_path,
            file,
        })
    }

    /// Durably appends one updated entry.
    pub fn append(&mut self, entry: &ManifestEntry) -> Result<(), CorpusError> {
        let mut line = entry.to_json_line();
        line.push('\n');
        self.file
            .write_all(line.as_bytes())
            .and_then(|_| self.file.flush())
            .map_err(|e| CorpusError::io(&self.journal_path, e))
    }

    /// Rewrites the manifest from `manifest` and removes the journal.
    pub fn compact(self, manifest: &Manifest) -> Result<(), CorpusError> {
        save_manifest(manifest, &self.manifest_path)?;
        drop(self.file);
        fs::remove_file(&self.journal_path).map_err(|e| CorpusError::io(&self.journal_path, e))
    }
}
