use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use capsight_core::cluster::{cluster_and_label, Points, WardStorage};
use capsight_core::corpus::{ArtifactStore, EvaluationReports};
use capsight_core::similarity::{overlap_metric, symmetry_metric, OverlapReport, SymmetryReport};
use capsight_core::{Execution, RecommendationSet, Status};
use capsight_ingest::fixture::{build_fixture_corpus, synthetic_captions, write_fixture_images, FixtureOptions};
use serde_json::Value;

struct Env {
    dir: tempfile::TempDir,
    config: PathBuf,
}

impl Env {
    fn store(&self) -> ArtifactStore {
        ArtifactStore::new(self.dir.path().join("artifacts"))
    }

    fn run(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_capsight"))
            .arg("--config")
            .arg(&self.config)
            .args(args)
            .env("OPENAI_API_KEY", "test-key")
            .output()
            .unwrap()
    }

    /// Runs `args` expecting success and returns stdout.
    fn ok(&self, args: &[&str]) -> String {
        let out = self.run(args);
        assert!(
            out.status.success(),
            "{args:?} exited {:?}: {}",
            out.status.code(),
            String::from_utf8_lossy(&out.stderr)
        );
        String::from_utf8(out.stdout).unwrap()
    }

    fn json(&self, args: &[&str]) -> Value {
        let mut a = vec!["--json"];
        a.extend_from_slice(args);
        serde_json::from_str(&self.ok(&a)).unwrap()
    }
}

fn write_config(dir: &Path, extra: &str) -> PathBuf {
    let path = dir.join("capsight.toml");
    let text = format!(
        "[paths]\nartifacts = \"artifacts\"\nimages = \"images\"\n\n\
         [retry]\nmax_attempts = 2\nbase_backoff_ms = 1\n\n{extra}"
    );
    std::fs::write(&path, text).unwrap();
    path
}

fn fixture_env() -> Env {
    let dir = tempfile::tempdir().unwrap();
    let opts = FixtureOptions {
        rejected: 2,
        ..Default::default()
    };
    tokio::runtime::Runtime::new()
        .unwrap()
        .block_on(build_fixture_corpus(&dir.path().join("images"), &dir.path().join("artifacts"), opts))
        .unwrap();
    let config = write_config(
        dir.path(),
        &format!("[embedding]\nprovider = \"mock\"\ndimension = {}\n", opts.dimension),
    );
    Env { dir, config }
}

fn empty_env(extra: &str) -> Env {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), extra);
    Env { dir, config }
}

fn percent(p: f64) -> String {
    format!("{:.1}%", 100.0 * p)
}

#[test]
fn symmetry_table_matches_the_metric() {
    let env = fixture_env();
    let snap = env.store().load_snapshot(1).unwrap();
    let direct = symmetry_metric(snap.cosine_index("caption").unwrap(), &[1, 5], Execution::default()).unwrap();

    let text = env.ok(&["evaluate", "symmetry", "--n", "1,5"]);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2, "{text}");
    let cells: Vec<&str> = lines[1].split_whitespace().collect();
    assert_eq!(cells[0], "caption");
    assert_eq!(cells[1..], [percent(direct.entries[0].proportion), percent(direct.entries[1].proportion)]);

    let json = env.json(&["evaluate", "symmetry", "--n", "1,5"]);
    let reports: Vec<SymmetryReport> = serde_json::from_value(json).unwrap();
    assert_eq!(reports, vec![direct.clone()]);

    let saved: EvaluationReports = env.store().load_json(&env.store().reports_path()).unwrap().unwrap();
    assert_eq!(saved.symmetry, vec![direct]);
}

#[test]
fn overlap_table_columns() {
    let env = fixture_env();
    let text = env.ok(&["evaluate", "overlap", "--spaces", "caption,visual", "--n", "1,5,10,15,20,25"]);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "caption vs visual (78 images)");
    for col in ["Num. Recommendations", "Avg. Overlap", "No-Overlap", "Overlap ≤ 1"] {
        assert!(lines[1].contains(col), "{}", lines[1]);
    }
    assert_eq!(lines.len(), 2 + 6);
    let first: Vec<&str> = lines[2].split_whitespace().collect();
    assert_eq!(first[0], "1");

    let snap = env.store().load_snapshot(1).unwrap();
    let direct = overlap_metric(
        snap.cosine_index("caption").unwrap(),
        snap.cosine_index("visual").unwrap(),
        &[1, 5, 10, 15, 20, 25],
        Execution::default(),
    )
    .unwrap();
    let report: OverlapReport = serde_json::from_value(env.json(&["evaluate", "overlap"])).unwrap();
    assert_eq!(report, direct);
}

#[test]
fn recommend_is_a_deterministic_adapter() {
    let env = fixture_env();
    let snap = env.store().load_snapshot(1).unwrap();
    let direct = snap.recommend("p0010", 5, "caption").unwrap();
    let rec: RecommendationSet =
        serde_json::from_value(env.json(&["recommend", "p0010", "--n", "5", "--space", "caption"])).unwrap();
    assert_eq!(rec, direct);

    let a = env.ok(&["recommend", "p0010"]);
    let b = env.ok(&["recommend", "p0010"]);
    assert_eq!(a, b);
    assert!(a.lines().any(|l| l.starts_with("Explanation: ")), "{a}");
    assert_eq!(a.lines().filter(|l| l.contains("p0")).count(), 1 + 5);
}

#[test]
fn cluster_and_label_match_the_library() {
    let env = fixture_env();
    let text = env.ok(&["cluster", "--k", "4"]);
    assert!(text.starts_with("ID"), "{text}");
    assert_eq!(text.lines().count(), 5);

    let snap = env.store().load_snapshot(1).unwrap();
    let space = snap.space("caption").unwrap();
    let direct = cluster_and_label(
        Points::from(&**space),
        space.ids(),
        "caption",
        4,
        snap.caption_terms(),
        WardStorage::Auto,
        Execution::Sequential,
    )
    .unwrap();
    assert_eq!(snap.clusters(), Some(&direct));
    let exported: Value = serde_json::from_str(&env.ok(&["export", "--what", "clusters"])).unwrap();
    assert_eq!(exported, serde_json::to_value(&direct).unwrap());

    assert_eq!(env.ok(&["label"]), text);
}

#[test]
fn search_stats_and_exports() {
    let env = fixture_env();
    let hits = env.json(&["search", "lighthouse", "--limit", "3"]);
    let direct = env.store().load_snapshot(1).unwrap().search("lighthouse", 3).unwrap();
    assert_eq!(hits, serde_json::to_value(&direct).unwrap());

    let stats = env.json(&["stats"]);
    assert_eq!(stats["images"], 80);
    assert_eq!(stats["status_counts"]["rejected"], 2);
    assert_eq!(stats["spaces"]["caption"]["vectors"], 78);
    assert_eq!(stats["spaces"]["visual"]["dimension"], 32);
    assert_eq!(stats["captions"]["count"], 78);

    let out = env.dir.path().join("vectors.ldjson");
    env.ok(&["export", "--what", "embeddings", "--space", "visual", "--out", out.to_str().unwrap()]);
    let lines = std::fs::read_to_string(&out).unwrap();
    assert_eq!(lines.lines().count(), 78);
    let first: Value = serde_json::from_str(lines.lines().next().unwrap()).unwrap();
    assert_eq!(first["values"].as_array().unwrap().len(), 32);

    let projection: Value = serde_json::from_str(&env.ok(&["export", "--what", "projection"])).unwrap();
    assert_eq!(projection["ids"].as_array().unwrap().len(), 78);
}

#[test]
fn full_pipeline_with_mock_providers() {
    let env = empty_env("[embedding]\nprovider = \"mock\"\ndimension = 64\n");
    let captions = synthetic_captions(12, 3);
    write_fixture_images(&env.dir.path().join("images"), &captions, (2048, 1024)).unwrap();

    let scan = env.json(&["ingest"]);
    assert_eq!(scan["added"].as_array().unwrap().len(), 12);
    assert_eq!(scan["downscaled"], 12);
    let again = env.json(&["ingest"]);
    assert_eq!(again["existing"], 12);

    let first = env.json(&["caption", "--limit", "5"]);
    assert_eq!(first["captioned"], 5);
    let rest = env.json(&["caption"]);
    assert_eq!(rest["captioned"], 7);
    assert_eq!(rest["skipped"], 5);

    let embedded = env.json(&["embed"]);
    assert_eq!(embedded["embedded"], 12);
    let reused = env.json(&["embed", "--neutralize"]);
    assert_eq!(reused["reused"], 12);
    assert_eq!(reused["provider_calls"], 0);

    let manifest = env.store().load_manifest().unwrap();
    assert!(manifest.records().all(|r| r.status == Status::Embedded));
    let text = env.ok(&["cluster", "--k", "4"]);
    assert_eq!(text.lines().count(), 5);
}

#[test]
fn import_vectors_adds_a_space() {
    let env = fixture_env();
    let store = env.store();
    let visual = store.load_space("visual").unwrap().unwrap();
    let file = env.dir.path().join("other.embd");
    capsight_core::corpus::write_embedding_file(&visual, &file).unwrap();
    let out = env.json(&["import-vectors", "--space", "audio", "--file", file.to_str().unwrap()]);
    assert_eq!(out["vectors"], 78);
    assert_eq!(store.load_space("audio").unwrap().unwrap().with_name("visual"), visual);
}

#[test]
fn usage_errors_exit_1() {
    let env = fixture_env();
    let out = env.run(&["cluster", "--k", "0"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("Usage"), "{err}");

    for args in [&["frobnicate"][..], &["recommend", "p0001", "--bogus"], &["evaluate", "symmetry", "--n", "1,x"]] {
        let out = env.run(args);
        assert_eq!(out.status.code(), Some(1), "{args:?}");
        assert!(!out.stderr.is_empty());
    }
    let out = env.run(&["evaluate", "overlap", "--spaces", "caption"]);
    assert_eq!(out.status.code(), Some(1));

    let help = env.run(&["--help"]);
    assert_eq!(help.status.code(), Some(0));
}

#[test]
fn missing_artifacts_exit_2() {
    let env = empty_env("");
    for args in [
        &["recommend", "p0001"][..],
        &["evaluate", "symmetry"],
        &["cluster", "--k", "2"],
        &["label"],
        &["export", "--what", "projection"],
        &["ingest"],
    ] {
        let out = env.run(args);
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        assert!(String::from_utf8_lossy(&out.stderr).starts_with("error: "));
    }

    let fixture = fixture_env();
    let out = fixture.run(&["recommend", "no-such-image"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn exhausted_provider_retries_exit_3() {
    let env = empty_env(
        "[caption]\nprovider = \"openai\"\nendpoint = \"http://127.0.0.1:9/v1/chat/completions\"\n",
    );
    write_fixture_images(&env.dir.path().join("images"), &synthetic_captions(2, 1), (64, 48)).unwrap();
    env.ok(&["ingest"]);
    let out = env.run(&["caption"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest = env.store().load_manifest().unwrap();
    assert!(manifest.records().all(|r| r.status == Status::Pending));
}
