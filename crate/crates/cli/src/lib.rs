//! The `capsight` command line: ingestion, captioning, embedding, evaluation,
//! clustering and serving over one artifact directory.
//!
//! Every subcommand is a thin adapter over the library crates and reads the
//! artifacts fresh, so its output can be reproduced by calling the underlying
//! function on the same snapshot. Text output is aligned plain text; `--json`
//! switches to machine-readable output.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error (missing or inconsistent
//! artifacts), 3 provider failure after retries.

mod commands;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};

pub use commands::execute;

/// Environment variable consulted when `--config` is absent.
pub const CONFIG_ENV: &str = "CAPSIGHT_CONFIG";

#[derive(Debug, Parser)]
#[command(name = "capsight", version, about = "Caption-surrogate search and discovery for image collections")]
pub struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true, env = CONFIG_ENV)]
    pub config: Option<PathBuf>,
    /// Machine-readable JSON instead of tables.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Scan the image directory into the manifest and report resize needs.
    Ingest,
    /// Caption pending images.
    Caption {
        /// Caption at most this many images.
        #[arg(long, value_parser = positive)]
        limit: Option<usize>,
    },
    /// Embed captions into the caption space.
    Embed {
        /// Replace gendered terms before embedding.
        #[arg(long)]
        neutralize: bool,
        /// Re-embed every caption instead of reusing stored vectors.
        #[arg(long)]
        force: bool,
    },
    /// Import externally computed vectors as a named space.
    ImportVectors {
        #[arg(long)]
        space: String,
        #[arg(long)]
        file: PathBuf,
    },
    /// Top-N similar images for one image, with explanation terms.
    Recommend {
        id: String,
        #[arg(long, default_value_t = 5, value_parser = positive)]
        n: usize,
        #[arg(long)]
        space: Option<String>,
    },
    /// Symmetry and overlap evaluations.
    #[command(subcommand)]
    Evaluate(Evaluate),
    /// Ward clustering of an embedding space, cut into k ordered clusters.
    Cluster {
        #[arg(long, value_parser = positive)]
        k: Option<usize>,
        #[arg(long)]
        space: Option<String>,
    },
    /// Recompute cluster labels from the current captions.
    Label,
    /// Corpus and caption statistics.
    Stats,
    /// BM25 full-text search over captions.
    Search {
        query: String,
        #[arg(long, default_value_t = 20, value_parser = positive)]
        limit: usize,
    },
    /// Write an artifact as JSON.
    Export(ExportArgs),
    /// Serve the HTTP API until interrupted. SIGHUP reloads the artifacts.
    Serve {
        /// Overrides `[server] bind`.
        #[arg(long)]
        bind: Option<String>,
    },
}

#[derive(Debug, Subcommand)]
pub enum Evaluate {
    /// Proportion of reciprocated recommendations per n.
    Symmetry {
        #[arg(long, value_delimiter = ',', default_value = "caption")]
        space: Vec<String>,
        #[arg(long, value_delimiter = ',', default_value = "1,5,10,15,20,25", value_parser = positive)]
        n: Vec<usize>,
    },
    /// Shared top-n recommendations between two spaces.
    Overlap {
        #[arg(long, value_delimiter = ',', default_value = "caption,visual")]
        spaces: Vec<String>,
        #[arg(long, value_delimiter = ',', default_value = "1,5,10,15,20,25", value_parser = positive)]
        n: Vec<usize>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExportKind {
    Projection,
    Clusters,
    Embeddings,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub what: ExportKind,
    /// Space for `--what embeddings`.
    #[arg(long, default_value = "caption")]
    pub space: String,
    /// Output file; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn positive(s: &str) -> Result<usize, String> {
    match s.trim().parse::<usize>() {
        Ok(0) => Err("must be at least 1".into()),
        Ok(v) => Ok(v),
        Err(e) => Err(e.to_string()),
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Provider(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Provider(_) => 3,
        }
    }
}

/// Parses `args` (program name first), runs the command and returns the exit code.
/// Diagnostics go to `err`.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let rendered = e.render().to_string();
            if !e.use_stderr() {
                let _ = out.write_all(rendered.as_bytes());
                return 0;
            }
            let _ = err.write_all(rendered.as_bytes());
            if !rendered.contains("Usage:") {
                let _ = writeln!(err, "\n{}", Cli::command().render_usage());
            }
            return 1;
        }
    };
    match execute(&cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            if matches!(e, CliError::Usage(_)) {
                let _ = writeln!(err, "\n{}", Cli::command().render_usage());
            }
            e.exit_code()
        }
    }
}
