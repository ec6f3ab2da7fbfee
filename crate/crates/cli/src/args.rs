use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use sba_core::config::{parse_bool, PipelineConfig};
use sba_core::Result;

#[derive(Debug, Parser)]
#[command(
    name = "sba",
    version,
    about = "Semantic-based aggregation pipeline for image retrieval and classification"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Select the highest-variance channels of a dataset as semantic detectors
    Select(SelectArgs),
    /// Aggregate every tensor of a manifest into a raw SBA vector batch
    Aggregate(AggregateArgs),
    /// Fit L2-normalization + PCA whitening on a vector batch
    FitPca(FitPcaArgs),
    /// Compress a vector batch with a fitted PCA-whitening model
    ApplyPca(ApplyPcaArgs),
    /// Rank a database for every query by squared L2 distance
    Retrieve(RetrieveArgs),
    /// Mean average precision of ranked lists against good/ok/junk ground truth
    EvalMap(EvalMapArgs),
    /// Recall@N of ranked lists; good and ok images count as positives
    EvalRecall(EvalRecallArgs),
    /// Multi-neighbor classification of queries against a labelled database
    Classify(ClassifyArgs),
}

/// Flags accepted by every subcommand. Precedence: flag > config file > default.
#[derive(Debug, Clone, Default, Args)]
pub struct Shared {
    /// Power-normalization exponent of the proposal weights [default: 2]
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Power-scaling exponent of the proposal weights [default: 2]
    #[arg(long)]
    pub beta: Option<f64>,
    /// Number of semantic detectors to select [default: 25]
    #[arg(long)]
    pub n_detectors: Option<usize>,
    /// Output dimension of PCA whitening, capped by the data rank [default: 4096]
    #[arg(long)]
    pub dim: Option<usize>,
    /// Number of neighbors voting in the MN classifier [default: 40]
    #[arg(long)]
    pub k: Option<usize>,
    /// Re-rank once with average query expansion
    #[arg(long)]
    pub qe: bool,
    /// Number of top results averaged by query expansion [default: 10]
    #[arg(long)]
    pub qe_top: Option<usize>,
    /// L2-normalize vectors after whitening (true/false) [default: true]
    #[arg(long, num_args = 0..=1, default_missing_value = "true", value_parser = parse_flag)]
    pub final_norm: Option<bool>,
    /// Worker threads; results do not depend on this [default: 1]
    #[arg(long)]
    pub workers: Option<usize>,
    /// Seed for randomized steps [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Config file of `key = value` lines
    #[arg(long)]
    pub config: Option<PathBuf>,
}

fn parse_flag(s: &str) -> std::result::Result<bool, String> {
    parse_bool(s).map_err(|e| e.to_string())
}

impl Shared {
    pub fn resolve(&self) -> Result<PipelineConfig> {
        let mut cfg = PipelineConfig::default();
        if let Some(path) = &self.config {
            cfg = cfg.merge_file(path)?;
        }
        if let Some(v) = self.alpha {
            cfg.alpha = v;
        }
        if let Some(v) = self.beta {
            cfg.beta = v;
        }
        if let Some(v) = self.n_detectors {
            cfg.n_detectors = v;
        }
        if let Some(v) = self.dim {
            cfg.out_dim = v;
        }
        if let Some(v) = self.k {
            cfg.k_neighbors = v;
        }
        if let Some(v) = self.qe_top {
            cfg.qe_top = v;
        }
        if let Some(v) = self.final_norm {
            cfg.final_norm = v;
        }
        if let Some(v) = self.workers {
            cfg.workers = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    /// Database manifest (queries excluded)
    #[arg(long)]
    pub manifest: PathBuf,
    /// Output detector file
    #[arg(long)]
    pub out: PathBuf,
    /// Draw detectors uniformly at random from --seed instead of by variance
    #[arg(long)]
    pub random: bool,
    #[command(flatten)]
    pub shared: Shared,
}

#[derive(Debug, Args)]
pub struct AggregateArgs {
    /// Manifest of tensors to aggregate
    #[arg(long)]
    pub manifest: PathBuf,
    /// Detector file written by `select`
    #[arg(long)]
    pub detectors: PathBuf,
    /// Output SBAV batch, rows in manifest order
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub shared: Shared,
}

#[derive(Debug, Args)]
pub struct FitPcaArgs {
    /// Raw SBAV batch to learn from (L2-normalized before fitting)
    #[arg(long)]
    pub vectors: PathBuf,
    /// Output SBAP model
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub shared: Shared,
}

#[derive(Debug, Args)]
pub struct ApplyPcaArgs {
    /// Raw SBAV batch to compress (L2-normalized before projection)
    #[arg(long)]
    pub vectors: PathBuf,
    /// SBAP model written by `fit-pca`
    #[arg(long)]
    pub model: PathBuf,
    /// Output SBAV batch of compressed vectors
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub shared: Shared,
}

#[derive(Debug, Args)]
pub struct RetrieveArgs {
    /// Compressed query vectors (SBAV)
    #[arg(long)]
    pub queries: PathBuf,
    /// Manifest naming the query rows
    #[arg(long)]
    pub query_manifest: PathBuf,
    /// Compressed database vectors (SBAV)
    #[arg(long)]
    pub database: PathBuf,
    /// Manifest naming the database rows
    #[arg(long)]
    pub manifest: PathBuf,
    /// Ranked output file; stdout when omitted
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub shared: Shared,
}

#[derive(Debug, Args)]
pub struct EvalMapArgs {
    /// Ranked lists written by `retrieve`
    #[arg(long)]
    pub ranked: PathBuf,
    /// Ground truth lines `query<TAB>image<TAB>good|ok|junk`
    #[arg(long)]
    pub gt: PathBuf,
    /// Also print the AP of every query
    #[arg(long)]
    pub per_query: bool,
    #[command(flatten)]
    pub shared: Shared,
}

#[derive(Debug, Args)]
pub struct EvalRecallArgs {
    /// Ranked lists written by `retrieve`
    #[arg(long)]
    pub ranked: PathBuf,
    /// Ground truth; good and ok images are positives
    #[arg(long)]
    pub gt: PathBuf,
    /// Cut-offs, comma separated
    #[arg(long, value_delimiter = ',', default_value = "1,5,10")]
    pub n: Vec<usize>,
    #[command(flatten)]
    pub shared: Shared,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    /// Compressed query vectors (SBAV)
    #[arg(long)]
    pub queries: PathBuf,
    /// Manifest naming the query rows; labels, when all present, are scored
    #[arg(long)]
    pub query_manifest: PathBuf,
    /// Compressed database vectors (SBAV)
    #[arg(long)]
    pub database: PathBuf,
    /// Labelled manifest naming the database rows
    #[arg(long)]
    pub manifest: PathBuf,
    /// Predictions output file; stdout when omitted
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Neighbor vote weighting: `paper` gives K-k, `plus-one` gives K-k+1
    #[arg(long, default_value = "paper")]
    pub mn_weight: String,
    #[command(flatten)]
    pub shared: Shared,
}

impl Command {
    pub fn shared(&self) -> &Shared {
        match self {
            Command::Select(a) => &a.shared,
            Command::Aggregate(a) => &a.shared,
            Command::FitPca(a) => &a.shared,
            Command::ApplyPca(a) => &a.shared,
            Command::Retrieve(a) => &a.shared,
            Command::EvalMap(a) => &a.shared,
            Command::EvalRecall(a) => &a.shared,
            Command::Classify(a) => &a.shared,
        }
    }
}
