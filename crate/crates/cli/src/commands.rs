use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;
use std::sync::Arc;

use capsight_core::cluster::{
    cluster_and_label, label_clusters, project_2d, ClusterAssignment, ClusterError, Points,
    WardStorage, LABEL_TERMS,
};
use capsight_core::corpus::{ArtifactStore, CorpusError, EvaluationReports, Manifest};
use capsight_core::similarity::{overlap_metric, symmetry_metric, symmetry_table};
use capsight_core::textlab::{HedgeLexicon, NeutralizationLexicon, TextlabError};
use capsight_core::{CorpusSnapshot, Execution, SimilarityError};
use capsight_ingest::{
    caption_provider, caption_store, embed_store, embedding_provider, import_vectors,
    ingest_directory, CaptionSettings, Config, EmbedSettings, FsImageSource, IngestError,
};
use capsight_service::{serve, ServiceConfig, ServiceHandle};
use serde::Serialize;

use crate::{Cli, CliError, Command, Evaluate, ExportArgs, ExportKind};

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<SimilarityError> for CliError {
    fn from(e: SimilarityError) -> Self {
        match e {
            SimilarityError::InvalidN | SimilarityError::EmptyNValues => CliError::Usage(e.to_string()),
            e => CliError::Data(e.to_string()),
        }
    }
}

impl From<ClusterError> for CliError {
    fn from(e: ClusterError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<TextlabError> for CliError {
    fn from(e: TextlabError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

struct Ctx<'a> {
    cfg: Config,
    store: ArtifactStore,
    json: bool,
    out: &'a mut dyn Write,
}

impl Ctx<'_> {
    fn snapshot(&self) -> Result<CorpusSnapshot, CliError> {
        Ok(self.store.load_snapshot(1)?)
    }

    /// JSON of `value` under `--json`, `text()` otherwise.
    fn emit<T: Serialize>(&mut self, value: &T, text: impl FnOnce() -> String) -> Result<(), CliError> {
        if self.json {
            let s = serde_json::to_string_pretty(value).map_err(|e| CliError::Data(e.to_string()))?;
            writeln!(self.out, "{s}")?;
        } else {
            self.out.write_all(text().as_bytes())?;
        }
        Ok(())
    }

    fn hedges(&self) -> Result<HedgeLexicon, CliError> {
        Ok(match &self.cfg.textlab.hedge_lexicon {
            Some(p) => HedgeLexicon::from_file(p)?,
            None => HedgeLexicon::default(),
        })
    }

    fn neutralization(&self) -> Result<NeutralizationLexicon, CliError> {
        Ok(match &self.cfg.textlab.neutralization_lexicon {
            Some(p) => NeutralizationLexicon::from_file(p)?,
            None => NeutralizationLexicon::default(),
        })
    }
}

fn runtime() -> Result<tokio::runtime::Runtime, CliError> {
    tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::Data(format!("cannot start async runtime: {e}")))
}

/// Runs a parsed command line.
pub fn execute(cli: &Cli, out: &mut dyn Write) -> Result<(), CliError> {
    let cfg = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    let store = ArtifactStore::new(&cfg.paths.artifacts);
    let mut ctx = Ctx {
        cfg,
        store,
        json: cli.json,
        out,
    };
    match &cli.command {
        Command::Ingest => ingest(&mut ctx),
        Command::Caption { limit } => caption(&mut ctx, *limit),
        Command::Embed { neutralize, force } => embed(&mut ctx, *neutralize, *force),
        Command::ImportVectors { space, file } => {
            let manifest = ctx.store.load_manifest()?;
            let imported = import_vectors(file, space, &manifest)?;
            ctx.store.save_space(&imported)?;
            let summary = serde_json::json!({
                "space": imported.name(),
                "vectors": imported.len(),
                "dimension": imported.dimension(),
            });
            ctx.emit(&summary, || {
                format!(
                    "imported {} vectors of dimension {} as space {}\n",
                    imported.len(),
                    imported.dimension(),
                    imported.name()
                )
            })
        }
        Command::Recommend { id, n, space } => recommend(&mut ctx, id, *n, space.as_deref()),
        Command::Evaluate(Evaluate::Symmetry { space, n }) => symmetry(&mut ctx, space, n),
        Command::Evaluate(Evaluate::Overlap { spaces, n }) => overlap(&mut ctx, spaces, n),
        Command::Cluster { k, space } => cluster(&mut ctx, *k, space.as_deref()),
        Command::Label => label(&mut ctx),
        Command::Stats => stats(&mut ctx),
        Command::Search { query, limit } => search(&mut ctx, query, *limit),
        Command::Export(args) => export(&mut ctx, args),
        Command::Serve { bind } => serve_forever(&ctx, bind.as_deref()),
    }
}

fn ingest(ctx: &mut Ctx<'_>) -> Result<(), CliError> {
    let mut manifest = if ctx.store.manifest_path().exists() {
        ctx.store.load_manifest()?
    } else {
        Manifest::new()
    };
    let report = ingest_directory(&mut manifest, &ctx.cfg.paths.images, ctx.cfg.resize)?;
    ctx.store.save_manifest(&manifest)?;
    ctx.emit(&report, || {
        format!(
            "added {}, already present {}, to be downscaled {}\n",
            report.added.len(),
            report.existing,
            report.downscaled
        )
    })
}

fn caption(ctx: &mut Ctx<'_>, limit: Option<usize>) -> Result<(), CliError> {
    let provider = caption_provider(&ctx.cfg)?;
    let images = FsImageSource {
        root: ctx.cfg.paths.images.clone(),
        rule: ctx.cfg.resize,
        quality: ctx.cfg.caption.jpeg_quality,
    };
    let mut settings = CaptionSettings::from_config(&ctx.cfg);
    settings.limit = limit;
    let report = runtime()?.block_on(caption_store(&ctx.store, provider.as_ref(), Arc::new(images), &settings))?;
    ctx.emit(&report, || {
        let mut s = format!(
            "captioned {}, rejected {}, failed {}, unreadable images {}, skipped {}, at token cap {}, provider calls {}\n",
            report.captioned,
            report.rejected.len(),
            report.failed.len(),
            report.image_errors.len(),
            report.skipped,
            report.capped,
            report.provider_calls
        );
        for (id, reason) in &report.rejected {
            let _ = writeln!(s, "rejected {id}: {reason}");
        }
        s
    })?;
    if !report.failed.is_empty() {
        return Err(CliError::Provider(format!(
            "{} images left pending after exhausting retries",
            report.failed.len()
        )));
    }
    if !report.image_errors.is_empty() {
        return Err(CliError::Data(format!(
            "{} images could not be read",
            report.image_errors.len()
        )));
    }
    Ok(())
}

fn embed(ctx: &mut Ctx<'_>, neutralize: bool, force: bool) -> Result<(), CliError> {
    let provider = embedding_provider(&ctx.cfg)?;
    let mut settings = EmbedSettings::from_config(&ctx.cfg);
    if neutralize {
        settings.neutralization = Some(ctx.neutralization()?);
    }
    let (space, report) = runtime()?.block_on(embed_store(&ctx.store, provider.as_ref(), &settings, force))?;
    ctx.emit(&report, || {
        format!(
            "space {}: {} vectors ({} embedded, {} reused, {} failed), provider calls {}\n",
            space.name(),
            space.len(),
            report.embedded,
            report.reused,
            report.failed.len(),
            report.provider_calls
        )
    })?;
    if !report.failed.is_empty() {
        return Err(CliError::Provider(format!(
            "{} captions left without a vector",
            report.failed.len()
        )));
    }
    Ok(())
}

fn recommend(ctx: &mut Ctx<'_>, id: &str, n: usize, space: Option<&str>) -> Result<(), CliError> {
    let snap = ctx.snapshot()?;
    let space = space.unwrap_or(&ctx.cfg.cluster.space).to_string();
    let rec = snap.recommend(id, n, &space)?;
    ctx.emit(&rec, || {
        let mut rows = vec![vec!["Rank".to_string(), "Image".to_string(), "Cosine".to_string()]];
        for (i, nb) in rec.neighbors.iter().enumerate() {
            rows.push(vec![(i + 1).to_string(), nb.image_id.clone(), format!("{:.6}", nb.score)]);
        }
        let mut s = format!("{} in space {}\n", rec.seed_id, rec.space_name);
        s.push_str(&table(&rows));
        let terms = rec.explanation_terms.as_ref().map_or_else(|| "-".to_string(), |t| t.join("; "));
        let _ = writeln!(s, "Explanation: {terms}");
        s
    })
}

fn save_reports(store: &ArtifactStore, update: impl FnOnce(&mut EvaluationReports)) -> Result<(), CliError> {
    let mut reports: EvaluationReports = store.load_json(&store.reports_path())?.unwrap_or_default();
    update(&mut reports);
    store.save_json(&store.reports_path(), &reports)?;
    Ok(())
}

fn symmetry(ctx: &mut Ctx<'_>, spaces: &[String], n: &[usize]) -> Result<(), CliError> {
    let snap = ctx.snapshot()?;
    let mut reports = Vec::with_capacity(spaces.len());
    for space in spaces {
        let index = snap.cosine_index(space)?;
        reports.push(symmetry_metric(index, n, Execution::default())?);
    }
    save_reports(&ctx.store, |all| {
        all.symmetry.retain(|r| !reports.iter().any(|x| x.space == r.space));
        all.symmetry.extend(reports.iter().cloned());
        all.symmetry.sort_by(|a, b| a.space.cmp(&b.space));
    })?;
    ctx.emit(&reports, || symmetry_table(&reports))
}

fn overlap(ctx: &mut Ctx<'_>, spaces: &[String], n: &[usize]) -> Result<(), CliError> {
    let [a, b] = spaces else {
        return Err(CliError::Usage(format!(
            "--spaces takes exactly two names, got {}",
            spaces.len()
        )));
    };
    let snap = ctx.snapshot()?;
    let report = overlap_metric(snap.cosine_index(a)?, snap.cosine_index(b)?, n, Execution::default())?;
    save_reports(&ctx.store, |all| {
        all.overlap.retain(|r| (&r.space_a, &r.space_b) != (a, b));
        all.overlap.push(report.clone());
        all.overlap.sort_by(|x, y| (&x.space_a, &x.space_b).cmp(&(&y.space_a, &y.space_b)));
    })?;
    ctx.emit(&report, || {
        format!("{} vs {} ({} images)\n{}", a, b, report.corpus_size, report.to_table())
    })
}

fn cluster(ctx: &mut Ctx<'_>, k: Option<usize>, space: Option<&str>) -> Result<(), CliError> {
    let snap = ctx.snapshot()?;
    let k = k.unwrap_or(ctx.cfg.cluster.k);
    let name = space.unwrap_or(&ctx.cfg.cluster.space);
    let sp = snap
        .space(name)
        .ok_or_else(|| CliError::Data(format!("embedding space {name:?} not found; run `embed` or `import-vectors` first")))?;
    if k > sp.len() {
        return Err(CliError::Usage(format!("--k {k} exceeds the {} images in space {name}", sp.len())));
    }
    let assignment = cluster_and_label(
        Points::from(&**sp),
        sp.ids(),
        name,
        k,
        snap.caption_terms(),
        WardStorage::Auto,
        Execution::default(),
    )?;
    ctx.store.save_json(&ctx.store.clusters_path(), &assignment)?;
    ctx.store.save_json(&ctx.store.projection_path(), &project_2d(sp)?)?;
    emit_clusters(ctx, &assignment)
}

fn label(ctx: &mut Ctx<'_>) -> Result<(), CliError> {
    let snap = ctx.snapshot()?;
    let mut assignment = snap
        .clusters()
        .cloned()
        .ok_or_else(|| CliError::Data("no clusters; run `cluster` first".into()))?;
    label_clusters(&mut assignment, snap.caption_terms(), LABEL_TERMS)?;
    ctx.store.save_json(&ctx.store.clusters_path(), &assignment)?;
    emit_clusters(ctx, &assignment)
}

fn emit_clusters(ctx: &mut Ctx<'_>, a: &ClusterAssignment) -> Result<(), CliError> {
    let ordered: Vec<_> = a.ordered();
    ctx.emit(&ordered, || a.to_table())
}

#[derive(Serialize)]
struct SpaceInfo {
    vectors: usize,
    dimension: usize,
}

#[derive(Serialize)]
struct Stats {
    images: usize,
    status_counts: BTreeMap<&'static str, usize>,
    spaces: BTreeMap<String, SpaceInfo>,
    captions: Option<capsight_core::textlab::CaptionStats>,
    clusters: Option<usize>,
}

fn stats(ctx: &mut Ctx<'_>) -> Result<(), CliError> {
    let snap = ctx.snapshot()?;
    let captions = match snap.caption_stats(&ctx.hedges()?, ctx.cfg.caption.max_tokens) {
        Ok(s) => Some(s),
        Err(TextlabError::TooFewCaptions { .. }) => None,
        Err(e) => return Err(e.into()),
    };
    let spaces = snap
        .space_names()
        .map(|name| {
            let sp = snap.space(name).expect("listed space");
            (
                name.to_string(),
                SpaceInfo {
                    vectors: sp.len(),
                    dimension: sp.dimension(),
                },
            )
        })
        .collect();
    let stats = Stats {
        images: snap.len(),
        status_counts: snap.status_counts(),
        spaces,
        captions,
        clusters: snap.clusters().map(|c| c.k),
    };
    ctx.emit(&stats, || {
        let mut rows = vec![vec!["Images".to_string(), stats.images.to_string()]];
        for (status, count) in &stats.status_counts {
            rows.push(vec![format!("  {status}"), count.to_string()]);
        }
        for (name, info) in &stats.spaces {
            rows.push(vec![format!("Space {name}"), format!("{} x {}", info.vectors, info.dimension)]);
        }
        if let Some(c) = &stats.captions {
            rows.push(vec!["Captions".into(), c.count.to_string()]);
            rows.push(vec!["Tokens (mean ± sd)".into(), format!("{:.1} ± {:.1}", c.tokens.mean, c.tokens.sd)]);
            rows.push(vec!["Words (mean ± sd)".into(), format!("{:.1} ± {:.1}", c.words.mean, c.words.sd)]);
            rows.push(vec![
                "Hedged".into(),
                format!("{} ({:.1}%)", c.hedged_count, 100.0 * c.hedge_rate),
            ]);
            rows.push(vec![format!("At {}-token cap", c.token_cap), c.capped_count.to_string()]);
        }
        if let Some(k) = stats.clusters {
            rows.push(vec!["Clusters".into(), k.to_string()]);
        }
        table(&rows)
    })
}

fn search(ctx: &mut Ctx<'_>, query: &str, limit: usize) -> Result<(), CliError> {
    let snap = ctx.snapshot()?;
    let hits = snap.search(query, limit)?;
    ctx.emit(&hits, || {
        let mut rows = vec![vec!["Rank".to_string(), "Image".to_string(), "BM25".to_string()]];
        for (i, h) in hits.iter().enumerate() {
            rows.push(vec![(i + 1).to_string(), h.image_id.clone(), format!("{:.4}", h.score)]);
        }
        table(&rows)
    })
}

fn export(ctx: &mut Ctx<'_>, args: &ExportArgs) -> Result<(), CliError> {
    let snap = ctx.snapshot()?;
    let body = match args.what {
        ExportKind::Projection => {
            let p = snap
                .projection()
                .ok_or_else(|| CliError::Data("no projection; run `cluster` first".into()))?;
            to_json(p)?
        }
        ExportKind::Clusters => {
            let c = snap
                .clusters()
                .ok_or_else(|| CliError::Data("no clusters; run `cluster` first".into()))?;
            to_json(c)?
        }
        ExportKind::Embeddings => {
            let sp = snap
                .space(&args.space)
                .ok_or_else(|| CliError::Data(format!("embedding space {:?} not found", args.space)))?;
            // One object per line keeps large spaces streamable.
            let mut s = String::new();
            for (id, values) in sp.iter() {
                let line = serde_json::json!({ "image_id": id, "values": values });
                let _ = writeln!(s, "{line}");
            }
            s
        }
    };
    match &args.out {
        Some(path) => std::fs::write(path, body).map_err(|e| CliError::Data(format!("{}: {e}", path.display()))),
        None => Ok(ctx.out.write_all(body.as_bytes())?),
    }
}

fn to_json<T: Serialize>(v: &T) -> Result<String, CliError> {
    let mut s = serde_json::to_string_pretty(v).map_err(|e| CliError::Data(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

fn serve_forever(ctx: &Ctx<'_>, bind: Option<&str>) -> Result<(), CliError> {
    let snapshot = ctx.snapshot()?;
    let config = ServiceConfig::from_config(&ctx.cfg, ctx.hedges()?);
    let handle = ServiceHandle::new(snapshot, config);
    let addr = bind.unwrap_or(&ctx.cfg.server.bind).to_string();
    let store = ctx.store.clone();
    runtime()?.block_on(async move {
        let server = serve(handle, &addr).await.map_err(|e| CliError::Data(e.to_string()))?;
        eprintln!("serving on http://{}", server.addr());
        reload_on_hangup(server.handle().clone(), store);
        let _ = tokio::signal::ctrl_c().await;
        server.shutdown().await.map_err(|e| CliError::Data(e.to_string()))
    })
}

#[cfg(unix)]
fn reload_on_hangup(handle: ServiceHandle, store: ArtifactStore) {
    use tokio::signal::unix::{signal, SignalKind};
    let Ok(mut hup) = signal(SignalKind::hangup()) else {
        log::warn!("cannot listen for SIGHUP; snapshot reloads disabled");
        return;
    };
    tokio::spawn(async move {
        while hup.recv().await.is_some() {
            let next = handle.version() + 1;
            match store.load_snapshot(next) {
                Ok(s) => {
                    let prev = handle.swap_snapshot(s);
                    log::info!("reloaded artifacts: version {prev} -> {}", handle.version());
                }
                Err(e) => log::error!("reload failed, keeping version {}: {e}", handle.version()),
            }
        }
    });
}

#[cfg(not(unix))]
fn reload_on_hangup(_handle: ServiceHandle, _store: ArtifactStore) {}

/// Left-aligned first column, right-aligned others.
fn table(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|c| rows.iter().filter_map(|r| r.get(c)).map(|s| s.chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in rows {
        let mut line = String::new();
        for (c, cell) in row.iter().enumerate() {
            if c == 0 {
                let _ = write!(line, "{cell:<w$}", w = widths[0]);
            } else {
                let _ = write!(line, "  {cell:>w$}", w = widths[c]);
            }
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }
    out
}
