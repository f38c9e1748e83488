use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use decontext_core::dataset::FieldMap;
use decontext_core::metrics::Metric;
use decontext_core::pipeline::{RewriteMode, RunMode, SegmentationCalls, SelectionMode};

#[derive(Debug, Parser)]
#[command(name = "decontext", version, about = "Rewrite sentences so they stand on their own, and score the rewrites")]
pub struct Cli {
    /// More log output (-v info, -vv debug). RUST_LOG overrides.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Decontextualise every record of a dataset.
    Run(RunArgs),
    /// Score a results file against the dataset's gold rewrites.
    Eval(EvalArgs),
    /// Print dataset statistics.
    Stats(StatsArgs),
    /// Inspect or clear a response cache.
    Cache {
        #[command(subcommand)]
        action: CacheAction,
    },
    /// Write sentences and their EDUs for human rating.
    ExportAnnotations(ExportArgs),
}

#[derive(Debug, Clone, Args)]
pub struct FieldArgs {
    #[arg(long, default_value = "id")]
    pub id_field: String,
    #[arg(long, default_value = "sentence")]
    pub sentence_field: String,
    /// Holds a list of sentences or one paragraph string.
    #[arg(long, default_value = "context")]
    pub context_field: String,
    #[arg(long, default_value = "decontextualised")]
    pub gold_field: String,
}

impl FieldArgs {
    pub fn field_map(&self) -> FieldMap {
        FieldMap {
            id_field: self.id_field.clone(),
            sentence_field: self.sentence_field.clone(),
            context_field: self.context_field.clone(),
            gold_field: self.gold_field.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendKind {
    Http,
    Mock,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Ecsp,
    Vanilla,
}

impl From<ModeArg> for RunMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Ecsp => RunMode::Ecsp,
            ModeArg::Vanilla => RunMode::Vanilla,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SelectionArg {
    Batched,
    PerAmbiguous,
}

impl From<SelectionArg> for SelectionMode {
    fn from(s: SelectionArg) -> Self {
        match s {
            SelectionArg::Batched => SelectionMode::Batched,
            SelectionArg::PerAmbiguous => SelectionMode::PerAmbiguous,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SegCallsArg {
    Unified,
    Split,
}

impl From<SegCallsArg> for SegmentationCalls {
    fn from(s: SegCallsArg) -> Self {
        match s {
            SegCallsArg::Unified => SegmentationCalls::Unified,
            SegCallsArg::Split => SegmentationCalls::Split,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum RewriteArg {
    Single,
    Iterative,
}

impl From<RewriteArg> for RewriteMode {
    fn from(r: RewriteArg) -> Self {
        match r {
            RewriteArg::Single => RewriteMode::Single,
            RewriteArg::Iterative => RewriteMode::Iterative,
        }
    }
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// JSONL dataset.
    pub dataset: PathBuf,
    #[command(flatten)]
    pub fields: FieldArgs,
    #[arg(long, value_enum, default_value = "mock")]
    pub backend: BackendKind,
    /// Model name sent to the API (defaults to "mock" for the mock backend).
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long, default_value = "https://api.openai.com/v1")]
    pub api_base: String,
    /// Name of the environment variable holding the API key.
    #[arg(long)]
    pub api_key_env: Option<String>,
    #[arg(long, default_value_t = 512)]
    pub max_tokens: u32,
    #[arg(long, default_value_t = 0.0)]
    pub temperature: f64,
    #[arg(long, default_value_t = 500)]
    pub requests_per_minute: u32,
    /// Demonstrations JSONL replacing the bundled set.
    #[arg(long)]
    pub demos_file: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    pub demos_per_stage: usize,
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "ecsp")]
    pub mode: ModeArg,
    #[arg(long, value_enum, default_value = "batched")]
    pub selection: SelectionArg,
    #[arg(long, value_enum, default_value = "unified")]
    pub seg_calls: SegCallsArg,
    #[arg(long, value_enum, default_value = "single")]
    pub rewrite: RewriteArg,
    /// Keep context pairs whose relation carries no gain.
    #[arg(long)]
    pub no_gain_filter: bool,
    /// Records processed concurrently.
    #[arg(long, default_value_t = 1)]
    pub parallel: usize,
    /// Process at most K records (after skipping resumed ones).
    #[arg(long)]
    pub limit: Option<usize>,
    /// Keep results already in --out and process only the rest.
    #[arg(long)]
    pub resume: bool,
    /// Store per-record wall time in results (breaks byte-reproducibility).
    #[arg(long)]
    pub timing: bool,
    /// Results JSONL.
    #[arg(long)]
    pub out: PathBuf,
    /// Run manifest (default: <out>.manifest.json).
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Overwrite existing output files.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Results JSONL written by `run`.
    pub results: PathBuf,
    /// Dataset holding the gold rewrites.
    #[arg(long)]
    pub dataset: PathBuf,
    #[command(flatten)]
    pub fields: FieldArgs,
    /// Comma-separated subset, e.g. sari,bleu. Default: every lexical metric.
    #[arg(long, value_delimiter = ',')]
    pub metrics: Vec<Metric>,
    /// JSON table of token vectors for the embedding score.
    #[arg(long, conflicts_with = "hash_embeddings")]
    pub embeddings: Option<PathBuf>,
    /// Hash-derived vectors for the embedding score; for plumbing tests only.
    #[arg(long)]
    pub hash_embeddings: bool,
    /// Row label in the markdown table.
    #[arg(long, default_value = "system")]
    pub system: String,
    /// Writes <PREFIX>.json, <PREFIX>.csv and <PREFIX>.md.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    pub dataset: PathBuf,
    #[command(flatten)]
    pub fields: FieldArgs,
    /// Print JSON instead of text.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Subcommand)]
pub enum CacheAction {
    /// Entry count and size on disk.
    Inspect {
        #[arg(long)]
        cache_dir: PathBuf,
    },
    /// Remove every entry.
    Clear {
        #[arg(long)]
        cache_dir: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    pub dataset: PathBuf,
    #[command(flatten)]
    pub fields: FieldArgs,
    /// Sample this many records (all when omitted).
    #[arg(long)]
    pub sample: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub force: bool,
}
