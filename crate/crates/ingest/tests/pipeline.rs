use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use async_trait::async_trait;
use capsight_core::corpus::{ArtifactStore, Manifest, ManifestEntry, ManifestJournal};
use capsight_core::textlab::NeutralizationLexicon;
use capsight_core::{Caption, ImageRecord, Status};
use capsight_ingest::mock::SAFETY_REFUSAL;
use capsight_ingest::{
    caption_corpus, caption_store, deterministic_mock_embedding, embed_corpus, embed_store,
    import_vectors, ingest_directory, CaptionSettings, Config, EmbedSettings, EmbeddingProvider,
    IngestError, MockCaptionProvider, MockEmbeddingProvider, MockScript, ProviderResult,
    ResizeRule, RetryPolicy, StubImageSource,
};

fn rt() -> tokio::runtime::Runtime {
    tokio::runtime::Builder::new_multi_thread()
        .worker_threads(2)
        .enable_all()
        .build()
        .unwrap()
}

fn settings() -> CaptionSettings {
    let mut s = CaptionSettings::from_config(&Config::default());
    s.retry = RetryPolicy::immediate(5);
    s
}

fn embed_settings() -> EmbedSettings {
    let mut s = EmbedSettings::from_config(&Config::default());
    s.retry = RetryPolicy::immediate(5);
    s
}

fn record(i: usize) -> ImageRecord {
    let mut r = ImageRecord::pending(format!("img{i:03}"), format!("img{i:03}.jpg"), 3000, 2000);
    r.title = format!("subject number {i}");
    r
}

fn manifest(n: usize) -> Manifest {
    Manifest::from_entries((0..n).map(|i| ManifestEntry::new(record(i))).collect()).unwrap()
}

fn store_with(n: usize) -> (tempfile::TempDir, ArtifactStore) {
    let dir = tempfile::tempdir().unwrap();
    let store = ArtifactStore::new(dir.path());
    store.save_manifest(&manifest(n)).unwrap();
    (dir, store)
}

#[test]
fn three_pending_become_captioned() {
    let mut m = manifest(3);
    let provider = MockCaptionProvider::new();
    let report = rt()
        .block_on(caption_corpus(&mut m, None, &provider, Arc::new(StubImageSource), &settings()))
        .unwrap();
    assert_eq!(report.captioned, 3);
    assert_eq!(provider.calls(), 3);
    for e in m.entries() {
        assert_eq!(e.record.status, Status::Captioned);
        let c = e.caption.as_ref().unwrap();
        assert!(c.token_count > 0);
        assert_eq!(c.model_id, "mock-captioner");
        assert_eq!(c.prompt_id, "describe-v1");
        assert!(e.validate().is_ok());
    }
}

#[test]
fn two_of_fifty_rejected_then_rerun_is_free() {
    let (_dir, store) = store_with(50);
    let provider = MockCaptionProvider::new()
        .script("img007", MockScript::Reject(SAFETY_REFUSAL.into()))
        .script("img031", MockScript::Reject(SAFETY_REFUSAL.into()));
    let rt = rt();
    let report = rt
        .block_on(caption_store(&store, &provider, Arc::new(StubImageSource), &settings()))
        .unwrap();
    assert_eq!(report.captioned, 48);
    assert_eq!(report.rejected.len(), 2);
    assert!(report.failed.is_empty());

    let m = store.load_manifest().unwrap();
    let by_status = |s| m.records().filter(|r| r.status == s).count();
    assert_eq!(by_status(Status::Captioned), 48);
    assert_eq!(by_status(Status::Rejected), 2);
    for id in ["img007", "img031"] {
        let e = m.get(id).unwrap();
        assert_eq!(e.record.rejection_reason.as_deref(), Some(SAFETY_REFUSAL));
        assert!(e.caption.is_none());
    }
    assert!(!ManifestJournal::journal_path(&store.manifest_path()).exists());

    let calls = provider.calls();
    let again = rt
        .block_on(caption_store(&store, &provider, Arc::new(StubImageSource), &settings()))
        .unwrap();
    assert_eq!(provider.calls(), calls, "rerun must not call the provider");
    assert_eq!(again.skipped, 50);
    assert_eq!(again.provider_calls, 0);
}

#[test]
fn interrupted_run_resumes_without_repeats() {
    let (_dir, store) = store_with(20);
    let provider = MockCaptionProvider::new();
    let rt = rt();

    // Simulate a crash after 7 completions: journal written, never compacted.
    let mut m = store.load_manifest().unwrap();
    let mut journal = ManifestJournal::open(&store.manifest_path()).unwrap();
    let mut s = settings();
    s.limit = Some(7);
    rt.block_on(caption_corpus(&mut m, Some(&mut journal), &provider, Arc::new(StubImageSource), &s))
        .unwrap();
    drop(journal);
    assert_eq!(provider.calls(), 7);

    let resumed = store.load_manifest().unwrap();
    assert_eq!(resumed.records().filter(|r| r.status == Status::Captioned).count(), 7);

    let report = rt
        .block_on(caption_store(&store, &provider, Arc::new(StubImageSource), &settings()))
        .unwrap();
    assert_eq!(report.skipped, 7);
    assert_eq!(report.captioned, 13);
    assert_eq!(provider.calls(), 20, "one call per image across both runs");
}

#[test]
fn transient_failures_retry_then_stay_pending() {
    let mut m = manifest(4);
    let provider = MockCaptionProvider::new()
        .script("img001", MockScript::TransientThenOk(2))
        .script("img002", MockScript::AlwaysTransient);
    let report = rt()
        .block_on(caption_corpus(&mut m, None, &provider, Arc::new(StubImageSource), &settings()))
        .unwrap();
    assert_eq!(report.captioned, 3);
    assert_eq!(report.failed.len(), 1);
    assert_eq!(report.failed[0].0, "img002");
    // 2 plain + 3 for img001 + 5 for img002
    assert_eq!(provider.calls(), 10);
    assert_eq!(report.provider_calls, 10);
    assert_eq!(m.get("img002").unwrap().record.status, Status::Pending);
    assert_eq!(m.get("img001").unwrap().record.status, Status::Captioned);
}

#[test]
fn capped_caption_is_kept_and_counted() {
    let mut m = manifest(2);
    let long = vec!["fog"; 900].join(" ");
    let provider = MockCaptionProvider::new().script("img000", MockScript::Text(long));
    let report = rt()
        .block_on(caption_corpus(&mut m, None, &provider, Arc::new(StubImageSource), &settings()))
        .unwrap();
    assert_eq!(report.capped, 1);
    let c = m.get("img000").unwrap().caption.as_ref().unwrap();
    assert_eq!(c.token_count, 500);
    assert!(c.hit_cap(500));
    assert!(!m.get("img001").unwrap().caption.as_ref().unwrap().hit_cap(500));
}

#[test]
fn concurrency_is_bounded() {
    struct Gate {
        live: AtomicUsize,
        peak: AtomicUsize,
    }
    #[async_trait]
    impl capsight_ingest::CaptionProvider for Gate {
        fn model_id(&self) -> &str {
            "gate"
        }
        async fn caption(
            &self,
            _r: &capsight_ingest::CaptionRequest<'_>,
        ) -> ProviderResult<capsight_ingest::CaptionOutput> {
            let now = self.live.fetch_add(1, Ordering::SeqCst) + 1;
            self.peak.fetch_max(now, Ordering::SeqCst);
            tokio::time::sleep(std::time::Duration::from_millis(5)).await;
            self.live.fetch_sub(1, Ordering::SeqCst);
            ProviderResult::Ok(capsight_ingest::CaptionOutput {
                text: "a field".into(),
                token_usage: 3,
            })
        }
    }
    let gate = Gate {
        live: AtomicUsize::new(0),
        peak: AtomicUsize::new(0),
    };
    let mut m = manifest(30);
    let mut s = settings();
    s.max_concurrency = 3;
    rt().block_on(caption_corpus(&mut m, None, &gate, Arc::new(StubImageSource), &s))
        .unwrap();
    let peak = gate.peak.load(Ordering::SeqCst);
    assert!(peak <= 3 && peak >= 2, "peak {peak}");
}

fn caption(id: &str, text: &str) -> Caption {
    Caption::new(id, text, 3, "m", "p")
}

#[test]
fn embed_two_captions() {
    let caps = [caption("a", "a barn in a field"), caption("b", "a subway car")];
    let provider = MockEmbeddingProvider::new(16, 7);
    let (space, report) = rt()
        .block_on(embed_corpus(caps.iter(), &provider, &embed_settings(), None, None))
        .unwrap();
    assert_eq!(space.len(), 2);
    assert_eq!(space.dimension(), 16);
    assert_eq!(space.ids(), ["a", "b"]);
    assert_eq!(report.embedded, 2);
}

#[test]
fn identical_texts_identical_vectors() {
    let caps = [caption("a", "two cows"), caption("b", "two cows")];
    let provider = MockEmbeddingProvider::new(32, 7);
    let (space, _) = rt()
        .block_on(embed_corpus(caps.iter(), &provider, &embed_settings(), None, None))
        .unwrap();
    assert_eq!(space.get("a").unwrap(), space.get("b").unwrap());
}

#[test]
fn neutralized_embedding_matches_direct() {
    let caps = [caption("a", "a man walks")];
    let provider = MockEmbeddingProvider::new(64, 7);
    let mut s = embed_settings();
    s.neutralization = Some(NeutralizationLexicon::from_pairs([("man", "person")]).unwrap());
    let (space, _) = rt()
        .block_on(embed_corpus(caps.iter(), &provider, &s, None, None))
        .unwrap();
    let direct = deterministic_mock_embedding("a person walks", 64, 7).unwrap();
    assert_eq!(space.get("a").unwrap(), direct.as_slice());
    let raw = deterministic_mock_embedding("a man walks", 64, 7).unwrap();
    assert_ne!(space.get("a").unwrap(), raw.as_slice());
}

#[test]
fn dimension_mismatch_aborts_with_id() {
    struct Liar;
    #[async_trait]
    impl EmbeddingProvider for Liar {
        fn model_id(&self) -> &str {
            "liar"
        }
        fn dimension(&self) -> usize {
            8
        }
        async fn embed(&self, text: &str) -> ProviderResult<Vec<f32>> {
            let dim = if text.contains("odd") { 9 } else { 8 };
            ProviderResult::Ok(deterministic_mock_embedding(text, dim, 1).unwrap())
        }
    }
    let caps = [caption("fine", "a barn"), caption("bad", "an odd one")];
    let err = rt()
        .block_on(embed_corpus(caps.iter(), &Liar, &embed_settings(), None, None))
        .unwrap_err();
    match err {
        IngestError::DimensionMismatch { id, expected, found } => {
            assert_eq!((id.as_str(), expected, found), ("bad", 8, 9));
        }
        other => panic!("unexpected {other}"),
    }
}

#[test]
fn embed_store_marks_embedded_and_reuses() {
    let (_dir, store) = store_with(10);
    let rt = rt();
    let provider = MockCaptionProvider::new().script("img004", MockScript::Reject("blocked".into()));
    rt.block_on(caption_store(&store, &provider, Arc::new(StubImageSource), &settings()))
        .unwrap();

    let embedder = MockEmbeddingProvider::new(16, 7);
    let (space, report) = rt
        .block_on(embed_store(&store, &embedder, &embed_settings(), false))
        .unwrap();
    assert_eq!(space.len(), 9);
    assert!(!space.contains("img004"), "rejected images have no vector");
    assert_eq!(report.embedded, 9);
    let m = store.load_manifest().unwrap();
    assert_eq!(m.records().filter(|r| r.status == Status::Embedded).count(), 9);
    assert_eq!(store.load_space("caption").unwrap().unwrap(), space);

    let (again, report) = rt
        .block_on(embed_store(&store, &embedder, &embed_settings(), false))
        .unwrap();
    assert_eq!(report.reused, 9);
    assert_eq!(report.provider_calls, 0);
    assert_eq!(embedder.calls(), 9);
    assert_eq!(again, space);

    let (_, report) = rt
        .block_on(embed_store(&store, &embedder, &embed_settings(), true))
        .unwrap();
    assert_eq!(report.reused, 0);
    assert_eq!(embedder.calls(), 18);

    // The snapshot accepts what the pipeline wrote.
    let snap = store.load_snapshot(1).unwrap();
    assert_eq!(snap.space("caption").unwrap().len(), 9);
}

#[test]
fn checkpoints_are_written() {
    let caps: Vec<Caption> = (0..10).map(|i| caption(&format!("c{i}"), &format!("word{i} barn"))).collect();
    let provider = MockEmbeddingProvider::new(8, 7);
    let mut s = embed_settings();
    s.checkpoint_every = 4;
    let mut sizes = Vec::new();
    let mut cb = |sp: &capsight_core::EmbeddingSpace| {
        sizes.push(sp.len());
        Ok(())
    };
    rt().block_on(embed_corpus(caps.iter(), &provider, &s, None, Some(&mut cb)))
        .unwrap();
    assert_eq!(sizes, [4, 8]);
}

#[test]
fn directory_scan_with_sidecars() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    std::fs::create_dir_all(root.join("roll1")).unwrap();
    image::RgbImage::new(2048, 1536).save(root.join("roll1/a.png")).unwrap();
    image::RgbImage::new(640, 480).save(root.join("b.jpg")).unwrap();
    std::fs::write(root.join("notes.txt"), "ignored").unwrap();
    let mut meta = BTreeMap::new();
    meta.insert("caption".to_string(), "a dairy barn".to_string());
    std::fs::write(
        root.join("b.json"),
        serde_json::json!({"title": "Barn", "metadata": meta}).to_string(),
    )
    .unwrap();

    let mut m = Manifest::new();
    let report = ingest_directory(&mut m, root, ResizeRule::default()).unwrap();
    assert_eq!(report.added, ["b", "roll1/a"]);
    assert_eq!(report.downscaled, 1);
    let b = &m.get("b").unwrap().record;
    assert_eq!((b.width_px, b.height_px), (640, 480));
    assert_eq!(b.title, "Barn");
    assert_eq!(b.metadata["caption"], "a dairy barn");
    assert_eq!(m.get("roll1/a").unwrap().record.source_path, "roll1/a.png");

    let again = ingest_directory(&mut m, root, ResizeRule::default()).unwrap();
    assert!(again.added.is_empty());
    assert_eq!(again.existing, 2);
}

#[test]
fn filesystem_source_feeds_resized_jpeg() {
    struct Probe(std::sync::Mutex<Vec<(u32, u32)>>);
    #[async_trait]
    impl capsight_ingest::CaptionProvider for Probe {
        fn model_id(&self) -> &str {
            "probe"
        }
        async fn caption(
            &self,
            r: &capsight_ingest::CaptionRequest<'_>,
        ) -> ProviderResult<capsight_ingest::CaptionOutput> {
            let img = image::load_from_memory_with_format(r.image_jpeg, image::ImageFormat::Jpeg).unwrap();
            self.0.lock().unwrap().push((img.width(), img.height()));
            ProviderResult::Ok(capsight_ingest::CaptionOutput { text: "x".into(), token_usage: 1 })
        }
    }
    let dir = tempfile::tempdir().unwrap();
    image::RgbImage::new(4000, 1000).save(dir.path().join("wide.png")).unwrap();
    let mut m = Manifest::new();
    ingest_directory(&mut m, dir.path(), ResizeRule::default()).unwrap();
    let probe = Probe(Default::default());
    let source = capsight_ingest::FsImageSource {
        root: dir.path().to_path_buf(),
        rule: ResizeRule::default(),
        quality: 90,
    };
    rt().block_on(caption_corpus(&mut m, None, &probe, Arc::new(source), &settings()))
        .unwrap();
    assert_eq!(*probe.0.lock().unwrap(), [(1024, 256)]);
}

#[test]
fn missing_image_leaves_record_pending() {
    let dir = tempfile::tempdir().unwrap();
    let mut m = manifest(1);
    let source = capsight_ingest::FsImageSource {
        root: dir.path().to_path_buf(),
        rule: ResizeRule::default(),
        quality: 90,
    };
    let provider = MockCaptionProvider::new();
    let report = rt()
        .block_on(caption_corpus(&mut m, None, &provider, Arc::new(source), &settings()))
        .unwrap();
    assert_eq!(report.image_errors.len(), 1);
    assert!(report.failed.is_empty());
    assert_eq!(provider.calls(), 0);
    assert_eq!(m.entries()[0].record.status, Status::Pending);
}

#[test]
fn import_checks_ids() {
    let dir = tempfile::tempdir().unwrap();
    let mut m = manifest(3);
    let mut e = m.get("img002").unwrap().clone();
    e.record.status = Status::Rejected;
    e.record.rejection_reason = Some("blocked".into());
    m.update(e).unwrap();

    let write = |ids: &[&str]| {
        let mut sp = capsight_core::EmbeddingSpace::new("whatever", 4).unwrap();
        for id in ids {
            sp.push(*id, &[1.0, 0.0, 0.5, 0.25]).unwrap();
        }
        let p = dir.path().join("v.embd");
        capsight_core::corpus::write_embedding_file(&sp, &p).unwrap();
        p
    };
    let ok = import_vectors(&write(&["img000", "img001"]), "visual", &m).unwrap();
    assert_eq!(ok.name(), "visual");
    assert!(import_vectors(&write(&["img000", "ghost"]), "visual", &m).is_err());
    assert!(import_vectors(&write(&["img002"]), "visual", &m).is_err());
}
