use std::path::PathBuf;

use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use saam::adapt::Activation;
use saam::embed::Backend;
use saam::model::ModelKind;
use saam::topics::MatchMode;

#[derive(Debug, Parser)]
#[command(
    name = "saam",
    version,
    about = "Prosocial chat classification with self-anchored attention"
)]
pub struct Cli {
    /// Repeat for more log output on stderr.
    #[arg(short, long, global = true, action = ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Clean a raw chat log into player-match histories.
    Ingest(IngestArgs),
    /// Embed histories or labeled texts.
    Embed(EmbedArgs),
    /// Cluster histories and list the top terms of each cluster.
    Discover(DiscoverArgs),
    /// Keep histories that mention a keyword.
    Filter(FilterArgs),
    /// Train a contrastive adapter on labeled anchors.
    Adapt(AdaptArgs),
    /// Train a model on all labeled records.
    Train(TrainArgs),
    /// Repeated anchor/test split evaluation.
    Eval(EvalArgs),
    /// Run the ablation rows.
    Ablate(EvalArgs),
    /// Compare analytic and numeric gradients on a random instance.
    Gradcheck(GradcheckArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Ingest(_) => "ingest",
            Command::Embed(_) => "embed",
            Command::Discover(_) => "discover",
            Command::Filter(_) => "filter",
            Command::Adapt(_) => "adapt",
            Command::Train(_) => "train",
            Command::Eval(_) => "eval",
            Command::Ablate(_) => "ablate",
            Command::Gradcheck(_) => "gradcheck",
        }
    }
}

fn parse_kind(s: &str) -> Result<ModelKind, String> {
    s.parse().map_err(|e: saam::Error| e.to_string())
}

fn serialize_kind<S: serde::Serializer>(k: &ModelKind, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(k.as_str())
}

/// Flat `key=value` file; keys are long flag names of the subcommand.
#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct ConfigArg {
    #[arg(long, value_name = "FILE")]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct IngestArgs {
    /// Chat log, one JSON message per line.
    #[arg(long = "in", value_name = "FILE")]
    #[serde(skip)]
    pub input: PathBuf,
    /// Histories TSV.
    #[arg(long, value_name = "FILE")]
    #[serde(skip)]
    pub out: PathBuf,
    #[command(flatten)]
    #[serde(skip)]
    pub config: ConfigArg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackendArg {
    HashTest,
    Remote,
}

impl From<BackendArg> for Backend {
    fn from(b: BackendArg) -> Self {
        match b {
            BackendArg::HashTest => Backend::HashTest,
            BackendArg::Remote => Backend::Remote,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct ProviderArgs {
    #[arg(long, value_enum)]
    pub backend: Option<BackendArg>,
    #[arg(long, default_value_t = 384)]
    pub dim: usize,
    /// Base URL of the embedding service.
    #[arg(long)]
    pub endpoint: Option<String>,
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 30_000)]
    pub timeout_ms: u64,
    #[arg(long, default_value_t = 3)]
    pub max_retries: u32,
    #[arg(long, default_value_t = 4)]
    pub max_in_flight: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct EmbedArgs {
    /// Histories TSV, or labeled JSONL when the name ends in `.jsonl`.
    #[arg(long = "in", value_name = "FILE")]
    #[serde(skip)]
    pub input: PathBuf,
    #[arg(long, value_name = "FILE")]
    #[serde(skip)]
    pub out: PathBuf,
    #[command(flatten)]
    #[serde(flatten)]
    pub provider: ProviderArgs,
    #[command(flatten)]
    #[serde(skip)]
    pub config: ConfigArg,
}

/// Where vectors for a text input come from: a precomputed file or a backend.
#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct VectorArgs {
    /// Vector file keyed by record id.
    #[arg(long, value_name = "FILE")]
    #[serde(skip)]
    pub embeddings: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub provider: ProviderArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct DiscoverArgs {
    /// Histories TSV.
    #[arg(long = "in", value_name = "FILE")]
    #[serde(skip)]
    pub input: PathBuf,
    /// Topics JSON.
    #[arg(long, value_name = "FILE")]
    #[serde(skip)]
    pub out: PathBuf,
    #[command(flatten)]
    #[serde(flatten)]
    pub vectors: VectorArgs,
    /// Number of clusters.
    #[arg(long, default_value_t = 20)]
    pub topics: usize,
    /// Terms listed per cluster.
    #[arg(long, default_value_t = 10)]
    pub top: usize,
    #[arg(long, default_value_t = 100)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    #[serde(skip)]
    pub config: ConfigArg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeArg {
    Exact,
    Soft,
}

impl From<ModeArg> for MatchMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Exact => MatchMode::Exact,
            ModeArg::Soft => MatchMode::Soft,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct FilterArgs {
    /// Histories TSV.
    #[arg(long = "in", value_name = "FILE")]
    #[serde(skip)]
    pub input: PathBuf,
    /// Matching histories, same TSV format.
    #[arg(long, value_name = "FILE")]
    #[serde(skip)]
    pub out: PathBuf,
    /// Per-keyword match statistics CSV.
    #[arg(long, value_name = "FILE")]
    #[serde(skip)]
    pub stats: Option<PathBuf>,
    /// Keyword file, one term per line.
    #[arg(long, value_name = "FILE", conflicts_with = "list")]
    #[serde(skip)]
    pub keywords: Option<PathBuf>,
    /// Bundled keyword list; community-builder when no file is given.
    #[arg(long)]
    pub list: Option<String>,
    #[arg(long, value_enum, default_value_t = ModeArg::Exact)]
    pub mode: ModeArg,
    /// Cosine threshold for soft matching.
    #[arg(long, default_value_t = saam::topics::DEFAULT_SOFT_TAU)]
    pub tau: f64,
    /// Word vector file keyed by word; needed for soft matching.
    #[arg(long, value_name = "FILE")]
    #[serde(skip)]
    pub word_vectors: Option<PathBuf>,
    #[command(flatten)]
    #[serde(skip)]
    pub config: ConfigArg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SyntheticArg {
    TwoGaussians,
    Multimodal,
}

/// Labeled records: a JSONL file plus vectors, or a generated data set.
#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct DataArgs {
    /// Labeled JSONL with `id`, `label`, `keyword` and `text`.
    #[arg(long = "in", value_name = "FILE", conflicts_with = "synthetic")]
    #[serde(skip)]
    pub input: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub vectors: VectorArgs,
    /// Generated data set used when no input is given.
    #[arg(long, value_enum)]
    pub synthetic: Option<SyntheticArg>,
    /// Seed of the generated data set; defaults to --seed.
    #[arg(long)]
    pub data_seed: Option<u64>,
}

#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct AdapterArgs {
    /// Anchors sampled per class and keyword.
    #[arg(long, default_value_t = saam::adapt::DEFAULT_PER_CLASS)]
    pub per_class: usize,
    /// Cosine margin for negative pairs.
    #[arg(long, default_value_t = saam::adapt::DEFAULT_MARGIN)]
    pub margin: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub adapter_lr: f64,
    /// 0 keeps the embeddings unchanged.
    #[arg(long, default_value_t = 30)]
    pub adapter_epochs: usize,
    #[arg(long, value_enum, default_value_t = ActivationArg::Linear)]
    pub activation: ActivationArg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ActivationArg {
    Linear,
    Tanh,
}

impl From<ActivationArg> for Activation {
    fn from(a: ActivationArg) -> Self {
        match a {
            ActivationArg::Linear => Activation::Linear,
            ActivationArg::Tanh => Activation::Tanh,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct ModelArgs {
    /// qkv, k-only, cossim, knn or no-attn.
    #[arg(long, default_value = "k-only", value_parser = parse_kind)]
    #[serde(serialize_with = "serialize_kind")]
    pub variant: ModelKind,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 30)]
    pub epochs: usize,
    /// Key width for qkv.
    #[arg(long, default_value_t = 64)]
    pub d_k: usize,
    #[arg(long, default_value_t = 1)]
    pub heads: usize,
    /// Hidden width for cossim.
    #[arg(long, default_value_t = 32)]
    pub hidden: usize,
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    /// Mask each anchor's own entry while training.
    #[arg(long, action = ArgAction::Set, num_args = 0..=1, default_value_t = false, default_missing_value = "true")]
    pub exclude_self: bool,
    /// Epochs without improvement before stopping.
    #[arg(long, default_value_t = 5)]
    pub patience: usize,
    /// Neighbours per class for knn.
    #[arg(long, default_value_t = saam::baselines::DEFAULT_K)]
    pub k: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct AdaptArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    /// Adapter file.
    #[arg(long, value_name = "FILE")]
    #[serde(skip)]
    pub out: PathBuf,
    #[command(flatten)]
    #[serde(flatten)]
    pub adapter: AdapterArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    #[serde(skip)]
    pub config: ConfigArg,
}

#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct TrainArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    /// Model file.
    #[arg(long, value_name = "FILE")]
    #[serde(skip)]
    pub out: PathBuf,
    #[command(flatten)]
    #[serde(flatten)]
    pub adapter: AdapterArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    #[serde(skip)]
    pub config: ConfigArg,
}

#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct EvalArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    /// Report JSON.
    #[arg(long, value_name = "FILE")]
    #[serde(skip)]
    pub report: PathBuf,
    /// Also write PR curves as CSV, one `<stem>-<split>.csv` per split.
    #[arg(long, value_name = "FILE")]
    #[serde(skip)]
    pub pr_csv: Option<PathBuf>,
    /// Share of each data set used as anchors.
    #[arg(long, default_value_t = 0.2)]
    pub anchor_frac: f64,
    #[arg(long, default_value_t = 3)]
    pub splits: usize,
    #[arg(long, action = ArgAction::Set, num_args = 0..=1, default_value_t = true, default_missing_value = "true")]
    pub stratified: bool,
    #[command(flatten)]
    #[serde(flatten)]
    pub adapter: AdapterArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    #[serde(skip)]
    pub config: ConfigArg,
}

#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct GradcheckArgs {
    /// qkv, k-only or cossim.
    #[arg(long, default_value = "qkv", value_parser = parse_kind)]
    #[serde(serialize_with = "serialize_kind")]
    pub variant: ModelKind,
    /// Anchors in the random instance.
    #[arg(long, default_value_t = 6)]
    pub n: usize,
    /// Embedding width of the random instance.
    #[arg(long, default_value_t = 8)]
    pub dim: usize,
    #[arg(long, default_value_t = 8)]
    pub d_k: usize,
    #[arg(long, default_value_t = 1)]
    pub heads: usize,
    #[arg(long, default_value_t = 4)]
    pub hidden: usize,
    #[arg(long, action = ArgAction::Set, num_args = 0..=1, default_value_t = false, default_missing_value = "true")]
    pub exclude_self: bool,
    /// Central difference step.
    #[arg(long, default_value_t = 1e-6)]
    pub eps: f64,
    /// Largest relative error that counts as a pass.
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,
    #[arg(long, default_value_t = 3)]
    pub seed: u64,
    /// Report JSON.
    #[arg(long, value_name = "FILE")]
    #[serde(skip)]
    pub report: Option<PathBuf>,
    #[command(flatten)]
    #[serde(skip)]
    pub config: ConfigArg,
}
