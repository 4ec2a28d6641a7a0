//! Manifest-driven caption and embedding runs.
//!
//! Both stages fan requests out with `buffer_unordered` and funnel every
//! completion through one writer loop, which is the only code that touches the
//! manifest, the journal or the checkpoint file.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use capsight_core::corpus::{
    read_embedding_file, ArtifactStore, CorpusError, Manifest, ManifestEntry, ManifestJournal,
    CAPTION_SPACE,
};
use capsight_core::textlab::{neutralize, NeutralizationLexicon};
use capsight_core::{Caption, EmbeddingSpace, ImageRecord, Status};
use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};

use crate::config::{Config, RetryPolicy};
use crate::provider::{CaptionOutput, CaptionProvider, CaptionRequest, EmbeddingProvider, ProviderResult};
use crate::resize::{compute_target_dimensions, image_dimensions, ResizeRule};
use crate::retry::with_retry;
use crate::source::ImageSource;
use crate::IngestError;

#[derive(Debug, Clone, PartialEq)]
pub struct CaptionSettings {
    pub prompt: String,
    pub prompt_id: String,
    pub max_tokens: u32,
    pub max_concurrency: usize,
    pub retry: RetryPolicy,
    /// Stop after this many pending records; `None` processes all of them.
    pub limit: Option<usize>,
}

impl CaptionSettings {
    pub fn from_config(cfg: &Config) -> Self {
        CaptionSettings {
            prompt: cfg.caption.prompt.clone(),
            prompt_id: cfg.caption.prompt_id.clone(),
            max_tokens: cfg.caption.max_tokens,
            max_concurrency: cfg.caption.max_concurrency,
            retry: cfg.retry.clone(),
            limit: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaptionReport {
    /// Records that were not pending when the run started.
    pub skipped: usize,
    pub captioned: usize,
    /// `(id, reason)` of records newly marked rejected.
    pub rejected: Vec<(String, String)>,
    /// `(id, detail)` of records left pending after exhausting retries.
    pub failed: Vec<(String, String)>,
    /// `(id, detail)` of records left pending because their image could not be read.
    pub image_errors: Vec<(String, String)>,
    /// Captions that used the whole token budget.
    pub capped: usize,
    /// Provider requests made, retries included.
    pub provider_calls: usize,
}

enum CaptionOutcome {
    Done(ProviderResult<CaptionOutput>, u32),
    ImageError(String),
}

/// Captions every pending record of `manifest` in place.
///
/// Each completion is applied to the manifest and, when given, appended to
/// `journal` before the next one is processed. Transient failures that
/// survive all retries leave the record pending and are listed in
/// [`CaptionReport::failed`]; the batch continues.
pub async fn caption_corpus(
    manifest: &mut Manifest,
    mut journal: Option<&mut ManifestJournal>,
    provider: &dyn CaptionProvider,
    images: Arc<dyn ImageSource>,
    settings: &CaptionSettings,
) -> Result<CaptionReport, IngestError> {
    let mut report = CaptionReport::default();
    let mut pending: Vec<ImageRecord> = Vec::new();
    for r in manifest.records() {
        if r.status == Status::Pending {
            pending.push(r.clone());
        } else {
            report.skipped += 1;
        }
    }
    if let Some(limit) = settings.limit {
        pending.truncate(limit);
    }
    let width = settings.max_concurrency.max(1);

    let mut completions = stream::iter(pending)
        .map(|record| {
            let images = Arc::clone(&images);
            async move {
                let rec = record.clone();
                let jpeg = tokio::task::spawn_blocking(move || images.load_jpeg(&rec)).await;
                let jpeg = match jpeg {
                    Ok(Ok(bytes)) => bytes,
                    Ok(Err(e)) => return (record, CaptionOutcome::ImageError(e)),
                    Err(e) => return (record, CaptionOutcome::ImageError(e.to_string())),
                };
                let request = CaptionRequest {
                    record: &record,
                    image_jpeg: &jpeg,
                    prompt: &settings.prompt,
                    max_tokens: settings.max_tokens,
                };
                let attempted =
                    with_retry(&settings.retry, &record.id, || provider.caption(&request)).await;
                let outcome = CaptionOutcome::Done(attempted.result, attempted.attempts);
                (record, outcome)
            }
        })
        .buffer_unordered(width);

    while let Some((record, outcome)) = completions.next().await {
        let id = record.id.clone();
        let mut entry = ManifestEntry::new(record);
        match outcome {
            CaptionOutcome::ImageError(e) => {
                log::error!("{id}: cannot prepare image: {e}");
                report.image_errors.push((id, e));
                continue;
            }
            CaptionOutcome::Done(result, attempts) => {
                report.provider_calls += attempts as usize;
                match result {
                    ProviderResult::Ok(out) if !out.text.trim().is_empty() => {
                        let caption = Caption::new(
                            id.clone(),
                            out.text,
                            out.token_usage,
                            provider.model_id(),
                            settings.prompt_id.clone(),
                        );
                        if caption.hit_cap(settings.max_tokens) {
                            log::warn!("{id}: caption hit the {}-token cap", settings.max_tokens);
                            report.capped += 1;
                        }
                        entry.record.status = Status::Captioned;
                        entry.caption = Some(caption);
                        report.captioned += 1;
                    }
                    ProviderResult::Ok(_) => {
                        log::error!("{id}: provider returned an empty caption");
                        report.failed.push((id, "empty caption".into()));
                        continue;
                    }
                    ProviderResult::Rejected(reason) => {
                        let reason = if reason.trim().is_empty() {
                            "rejected by provider".to_string()
                        } else {
                            reason
                        };
                        log::warn!("{id}: rejected: {reason}");
                        entry.record.status = Status::Rejected;
                        entry.record.rejection_reason = Some(reason.clone());
                        report.rejected.push((id, reason));
                    }
                    ProviderResult::TransientError(detail) => {
                        log::error!("{id}: giving up after {attempts} attempts: {detail}");
                        report.failed.push((id, detail));
                        continue;
                    }
                }
            }
        }
        manifest.update(entry.clone())?;
        if let Some(j) = journal.as_deref_mut() {
            j.append(&entry)?;
        }
    }
    Ok(report)
}

fn ensure_dir(path: &Path) -> Result<(), IngestError> {
    std::fs::create_dir_all(path).map_err(|e| IngestError::io(path, e))
}

/// [`caption_corpus`] over the manifest in `store`, journaling as it goes and
/// compacting the journal into the manifest when the run finishes.
pub async fn caption_store(
    store: &ArtifactStore,
    provider: &dyn CaptionProvider,
    images: Arc<dyn ImageSource>,
    settings: &CaptionSettings,
) -> Result<CaptionReport, IngestError> {
    ensure_dir(store.root())?;
    let mut manifest = store.load_manifest()?;
    let mut journal = ManifestJournal::open(&store.manifest_path())?;
    let report = caption_corpus(&mut manifest, Some(&mut journal), provider, images, settings).await?;
    journal.compact(&manifest)?;
    Ok(report)
}

#[derive(Debug, Clone)]
pub struct EmbedSettings {
    pub space_name: String,
    pub max_concurrency: usize,
    pub retry: RetryPolicy,
    /// Applied to caption text before it is sent to the provider.
    pub neutralization: Option<NeutralizationLexicon>,
    /// Write a partial space after this many new vectors.
    pub checkpoint_every: usize,
}

impl EmbedSettings {
    pub fn from_config(cfg: &Config) -> Self {
        EmbedSettings {
            space_name: CAPTION_SPACE.to_string(),
            max_concurrency: cfg.embedding.max_concurrency,
            retry: cfg.retry.clone(),
            neutralization: None,
            checkpoint_every: 256,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbedReport {
    /// Vectors carried over from an existing space.
    pub reused: usize,
    pub embedded: usize,
    /// `(id, detail)` of captions left without a vector.
    pub failed: Vec<(String, String)>,
    pub provider_calls: usize,
}

fn build_space(
    name: &str,
    dimension: usize,
    order: &[&Caption],
    vectors: &HashMap<String, Vec<f32>>,
) -> Result<EmbeddingSpace, IngestError> {
    let mut space = EmbeddingSpace::new(name, dimension)?;
    for c in order {
        if let Some(v) = vectors.get(&c.image_id) {
            space.push(c.image_id.clone(), v)?;
        }
    }
    Ok(space)
}

/// Embeds caption texts into a space named `settings.space_name`.
///
/// Vectors already present in `existing` are reused without a provider call.
/// Rows follow the order of `captions`. A vector whose length differs from
/// the provider's declared dimension aborts the run with the offending id;
/// other failures leave that caption without a vector.
pub async fn embed_corpus<'a>(
    captions: impl IntoIterator<Item = &'a Caption>,
    provider: &dyn EmbeddingProvider,
    settings: &EmbedSettings,
    existing: Option<&EmbeddingSpace>,
    mut checkpoint: Option<&mut (dyn FnMut(&EmbeddingSpace) -> Result<(), IngestError> + Send)>,
) -> Result<(EmbeddingSpace, EmbedReport), IngestError> {
    let dim = provider.dimension();
    let order: Vec<&Caption> = captions.into_iter().collect();
    let mut vectors: HashMap<String, Vec<f32>> = HashMap::new();
    let mut report = EmbedReport::default();

    if let Some(old) = existing {
        if old.dimension() != dim {
            return Err(IngestError::DimensionMismatch {
                id: old.ids().first().cloned().unwrap_or_default(),
                expected: dim,
                found: old.dimension(),
            });
        }
        for c in &order {
            if let Some(v) = old.get(&c.image_id) {
                vectors.insert(c.image_id.clone(), v.to_vec());
                report.reused += 1;
            }
        }
    }

    let todo: Vec<(String, String)> = order
        .iter()
        .filter(|c| !vectors.contains_key(&c.image_id))
        .map(|c| {
            let text = match &settings.neutralization {
                Some(lex) => neutralize(&c.text, lex),
                None => c.text.clone(),
            };
            (c.image_id.clone(), text)
        })
        .collect();

    let mut completions = stream::iter(todo)
        .map(|(id, text)| async move {
            let attempted = with_retry(&settings.retry, &id, || provider.embed(&text)).await;
            (id, attempted)
        })
        .buffer_unordered(settings.max_concurrency.max(1));

    let mut since_checkpoint = 0;
    while let Some((id, attempted)) = completions.next().await {
        report.provider_calls += attempted.attempts as usize;
        match attempted.result {
            ProviderResult::Ok(v) => {
                if v.len() != dim {
                    return Err(IngestError::DimensionMismatch {
                        id,
                        expected: dim,
                        found: v.len(),
                    });
                }
                let norm_sq: f64 = v.iter().map(|&x| x as f64 * x as f64).sum();
                if !norm_sq.is_finite() || norm_sq == 0.0 {
                    log::error!("{id}: provider returned a zero or non-finite vector");
                    report.failed.push((id, "zero or non-finite vector".into()));
                    continue;
                }
                vectors.insert(id, v);
                report.embedded += 1;
                since_checkpoint += 1;
                if let Some(cb) = checkpoint.as_deref_mut() {
                    if since_checkpoint >= settings.checkpoint_every.max(1) {
                        cb(&build_space(&settings.space_name, dim, &order, &vectors)?)?;
                        since_checkpoint = 0;
                    }
                }
            }
            ProviderResult::Rejected(reason) => {
                log::error!("{id}: embedding rejected: {reason}");
                report.failed.push((id, reason));
            }
            ProviderResult::TransientError(detail) => {
                log::error!("{id}: embedding failed after {} attempts: {detail}", attempted.attempts);
                report.failed.push((id, detail));
            }
        }
    }
    Ok((build_space(&settings.space_name, dim, &order, &vectors)?, report))
}

/// [`embed_corpus`] over the captions in `store`.
///
/// Unless `force` is set, an existing space of the same name supplies vectors
/// for captions it already covers; pass `force` after changing the
/// neutralization lexicon or the provider. Progress is checkpointed to the
/// space file. For the caption space, records with a vector become
/// [`Status::Embedded`].
pub async fn embed_store(
    store: &ArtifactStore,
    provider: &dyn EmbeddingProvider,
    settings: &EmbedSettings,
    force: bool,
) -> Result<(EmbeddingSpace, EmbedReport), IngestError> {
    ensure_dir(store.root())?;
    let mut manifest = store.load_manifest()?;
    let existing = if force { None } else { store.load_space(&settings.space_name)? };
    let mut save = |space: &EmbeddingSpace| -> Result<(), IngestError> {
        store.save_space(space)?;
        Ok(())
    };
    let (space, report) = {
        let captions: Vec<&Caption> = manifest.captions().collect();
        embed_corpus(captions, provider, settings, existing.as_ref(), Some(&mut save)).await?
    };
    store.save_space(&space)?;

    if settings.space_name == CAPTION_SPACE {
        let updates: Vec<ManifestEntry> = manifest
            .entries()
            .iter()
            .filter_map(|e| {
                let want = match (e.record.status, space.contains(&e.record.id)) {
                    (Status::Captioned, true) => Status::Embedded,
                    (Status::Embedded, false) => Status::Captioned,
                    _ => return None,
                };
                let mut e = e.clone();
                e.record.status = want;
                Some(e)
            })
            .collect();
        for e in updates {
            manifest.update(e)?;
        }
    }
    let journal = ManifestJournal::open(&store.manifest_path())?;
    journal.compact(&manifest)?;
    Ok((space, report))
}

/// Optional `<image>.json` next to an image file.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct Sidecar {
    title: String,
    metadata: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScanReport {
    pub added: Vec<String>,
    /// Images already in the manifest.
    pub existing: usize,
    /// Newly added images the resize rule will shrink before captioning.
    pub downscaled: usize,
}

const IMAGE_EXTENSIONS: [&str; 3] = ["jpg", "jpeg", "png"];

fn collect_images(dir: &Path, out: &mut Vec<PathBuf>) -> Result<(), IngestError> {
    let read = std::fs::read_dir(dir).map_err(|e| IngestError::io(dir, e))?;
    for item in read {
        let path = item.map_err(|e| IngestError::io(dir, e))?.path();
        if path.is_dir() {
            collect_images(&path, out)?;
        } else if path
            .extension()
            .and_then(|x| x.to_str())
            .is_some_and(|x| IMAGE_EXTENSIONS.contains(&x.to_ascii_lowercase().as_str()))
        {
            out.push(path);
        }
    }
    Ok(())
}

/// Adds every image under `root` that is not yet in `manifest` as a pending
/// record.
///
/// The id is the path relative to `root` without its extension, with `/` as
/// separator; `source_path` keeps the extension. Title and metadata come from
/// an optional JSON sidecar (`photo.jpg` → `photo.json`). Existing records are
/// left untouched.
pub fn ingest_directory(
    manifest: &mut Manifest,
    root: &Path,
    rule: ResizeRule,
) -> Result<ScanReport, IngestError> {
    rule.validate()?;
    let mut files = Vec::new();
    collect_images(root, &mut files)?;
    files.sort();
    let mut report = ScanReport::default();
    for path in files {
        let rel = path.strip_prefix(root).expect("walked under root");
        let Some(rel_str) = rel.to_str() else {
            return Err(IngestError::Config(format!("non-UTF-8 path {}", rel.display())));
        };
        let source_path = rel_str.replace(std::path::MAIN_SEPARATOR, "/");
        let id = match source_path.rfind('.') {
            Some(dot) => source_path[..dot].to_string(),
            None => source_path.clone(),
        };
        if manifest.get(&id).is_some() {
            report.existing += 1;
            continue;
        }
        let (w, h) = image_dimensions(&path)?;
        let mut record = ImageRecord::pending(id.clone(), source_path, w, h);
        let sidecar = path.with_extension("json");
        if sidecar.exists() {
            let text = std::fs::read_to_string(&sidecar).map_err(|e| IngestError::io(&sidecar, e))?;
            let meta: Sidecar = serde_json::from_str(&text)
                .map_err(|e| IngestError::Config(format!("{}: {e}", sidecar.display())))?;
            record.title = meta.title;
            record.metadata = meta.metadata;
        }
        if compute_target_dimensions(w, h, rule) != (w, h) {
            report.downscaled += 1;
        }
        manifest.push(ManifestEntry::new(record))?;
        report.added.push(id);
    }
    Ok(report)
}

/// Reads an embedding file as space `space_name`, checking that every id names
/// a record of `manifest` that was not rejected.
pub fn import_vectors(
    path: &Path,
    space_name: &str,
    manifest: &Manifest,
) -> Result<EmbeddingSpace, IngestError> {
    let space = read_embedding_file(path)?.with_name(space_name);
    for id in space.ids() {
        match manifest.get(id) {
            None => {
                return Err(CorpusError::DanglingReference {
                    what: format!("space {space_name}"),
                    id: id.clone(),
                }
                .into())
            }
            Some(e) if e.record.status == Status::Rejected => {
                return Err(CorpusError::Inconsistent {
                    id: id.clone(),
                    message: format!("rejected image has a vector in space {space_name}"),
                }
                .into())
            }
            Some(_) => {}
        }
    }
    Ok(space)
}
