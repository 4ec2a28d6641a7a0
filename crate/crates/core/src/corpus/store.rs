//! On-disk layout of a corpus directory.
//!
//! ```text
//! <root>/manifest.ldjson          image records and captions
//! <root>/manifest.ldjson.journal  progress not yet compacted into the manifest
//! <root>/embeddings/<space>.embd  one binary file per embedding space
//! <root>/clusters.json            cluster assignment and labels
//! <root>/projection.json          2D projection
//! <root>/reports.json             symmetry / overlap reports
//! <root>/thumbnails/              thumbnail cache
//! ```

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::{
    read_embedding_file, write_embedding_file, CorpusError, CorpusSnapshot, EmbeddingSpace,
    EvaluationReports, Manifest, SnapshotBuilder,
};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArtifactStore {
    root: PathBuf,
}

impl ArtifactStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        ArtifactStore { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.root.join("manifest.ldjson")
    }

    pub fn embeddings_dir(&self) -> PathBuf {
        self.root.join("embeddings")
    }

    pub fn space_path(&self, name: &str) -> PathBuf {
        self.embeddings_dir().join(format!("{name}.embd"))
    }

    pub fn clusters_path(&self) -> PathBuf {
        self.root.join("clusters.json")
    }

    pub fn projection_path(&self) -> PathBuf {
        self.root.join("projection.json")
    }

    pub fn reports_path(&self) -> PathBuf {
        self.root.join("reports.json")
    }

    pub fn thumbnails_dir(&self) -> PathBuf {
        self.root.join("thumbnails")
    }

    /// Names of the embedding spaces on disk, sorted.
    pub fn space_names(&self) -> Result<Vec<String>, CorpusError> {
        let dir = self.embeddings_dir();
        let read = match fs::read_dir(&dir) {
            Ok(r) => r,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(CorpusError::io(dir, e)),
        };
        let mut names = Vec::new();
        for item in read {
            let path = item.map_err(|e| CorpusError::io(&dir, e))?.path();
            if path.extension().is_some_and(|x| x == "embd") {
                if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                    names.push(stem.to_string());
                }
            }
        }
        names.sort();
        Ok(names)
    }

    pub fn load_manifest(&self) -> Result<Manifest, CorpusError> {
        let path = self.manifest_path();
        if !path.exists() && !super::ManifestJournal::journal_path(&path).exists() {
            return Ok(Manifest::new());
        }
        Manifest::load_resumable(&path)
    }

    pub fn save_manifest(&self, manifest: &Manifest) -> Result<(), CorpusError> {
        self.ensure_root()?;
        super::save_manifest(manifest, &self.manifest_path())
    }

    pub fn load_space(&self, name: &str) -> Result<Option<EmbeddingSpace>, CorpusError> {
        let path = self.space_path(name);
        if !path.exists() {
            return Ok(None);
        }
        read_embedding_file(&path).map(Some)
    }

    pub fn save_space(&self, space: &EmbeddingSpace) -> Result<u64, CorpusError> {
        let dir = self.embeddings_dir();
        fs::create_dir_all(&dir).map_err(|e| CorpusError::io(&dir, e))?;
        let path = self.space_path(space.name());
        let tmp = path.with_extension("embd.tmp");
        let n = write_embedding_file(space, &tmp)?;
        fs::rename(&tmp, &path).map_err(|e| CorpusError::io(&path, e))?;
        Ok(n)
    }

    pub fn load_json<T: DeserializeOwned>(&self, path: &Path) -> Result<Option<T>, CorpusError> {
        let text = match fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(CorpusError::io(path, e)),
        };
        serde_json::from_str(&text).map(Some).map_err(|e| CorpusError::InvalidArtifact {
            what: path.display().to_string(),
            message: e.to_string(),
        })
    }

    /// Writes pretty JSON through a temporary file and an atomic rename.
    pub fn save_json<T: Serialize>(&self, path: &Path, value: &T) -> Result<(), CorpusError> {
        self.ensure_root()?;
        let tmp = path.with_extension("json.tmp");
        let body = serde_json::to_vec_pretty(value)
            .map_err(|e| CorpusError::Format(e.to_string()))?;
        let mut f = fs::File::create(&tmp).map_err(|e| CorpusError::io(&tmp, e))?;
        f.write_all(&body)
            .and_then(|_| f.sync_all())
            .map_err(|e| CorpusError::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| CorpusError::io(path, e))
    }

    fn ensure_root(&self) -> Result<(), CorpusError> {
        fs::create_dir_all(&self.root).map_err(|e| CorpusError::io(&self.root, e))
    }

    /// Builder preloaded with every artifact present on disk.
    pub fn snapshot_builder(&self, version: u64) -> Result<SnapshotBuilder, CorpusError> {
        let manifest = self.load_manifest()?;
        let mut builder = CorpusSnapshot::builder(version).entries(manifest.into_entries());
        for name in self.space_names()? {
            if let Some(space) = self.load_space(&name)? {
                builder = builder.space(space);
            }
        }
        Ok(builder
            .clusters(self.load_json(&self.clusters_path())?)
            .projection(self.load_json(&self.projection_path())?)
            .reports(
                self.load_json::<EvaluationReports>(&self.reports_path())?
                    .unwrap_or_default(),
            ))
    }

    pub fn load_snapshot(&self, version: u64) -> Result<CorpusSnapshot, CorpusError> {
        self.snapshot_builder(version)?.build()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Caption, ImageRecord, ManifestEntry, Status, CAPTION_SPACE};

    #[test]
    fn empty_dir_loads_empty_snapshot() {
        let dir = tempfile::tempdir().unwrap();
        let store = ArtifactStore::new(dir.path());
        let s = store.load_snapshot(1).unwrap();
        assert!(s.is_empty());
        assert_eq!(store.space_names().unwrap(), Vec::<String>::new());
    }

    #[test]
    fn round_trip_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let store = ArtifactStore::new(dir.path().join("corpus"));
        let mut m = Manifest::new();
        let mut r = ImageRecord::pending("x", "x.jpg", 4, 3);
        r.status = Status::Embedded;
        m.push(ManifestEntry {
            record: r,
            caption: Some(Caption::new("x", "a red barn", 4, "m", "p")),
        })
        .unwrap();
        store.save_manifest(&m).unwrap();
        let mut sp = EmbeddingSpace::new(CAPTION_SPACE, 2).unwrap();
        sp.push("x", &[0.5, 0.25]).unwrap();
        store.save_space(&sp).unwrap();
        store
            .save_json(&store.reports_path(), &EvaluationReports::default())
            .unwrap();
        let s = store.load_snapshot(7).unwrap();
        assert_eq!(s.version(), 7);
        assert_eq!(s.space(CAPTION_SPACE).unwrap().get("x").unwrap(), &[0.5, 0.25]);
        assert_eq!(store.space_names().unwrap(), [CAPTION_SPACE]);
    }

    #[test]
    fn corrupt_json_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let store = ArtifactStore::new(dir.path());
        fs::write(store.clusters_path(), "{").unwrap();
        assert!(matches!(
            store.load_snapshot(1),
            Err(CorpusError::InvalidArtifact { .. })
        ));
    }
}
