use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use nhfa::data::DataMode;
use nhfa::engine::ModelKind;
use nhfa::eval::InputFormat;

#[derive(Debug, Parser)]
#[command(name = "nhfa", version, about = "Hierarchical beta-process factor analysis: synthesize, fit, evaluate, diagnose")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic multi-source data with known factors.
    Synth(SynthArgs),
    /// Run the sampler and write the trace and stored states.
    Fit(FitArgs),
    /// Held-out predictive likelihood and perplexity per document.
    Perplexity(PerplexityArgs),
    /// Cosine-similarity retrieval with precision@N and MAP.
    Retrieve(RetrieveArgs),
    /// Joint-distribution test and numerical oracle checks.
    Diagnose(DiagnoseArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    Pgm,
    Ggm,
}

impl From<ModelArg> for ModelKind {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Pgm => Self::Pgm,
            ModelArg::Ggm => Self::Ggm,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Counts,
    Reals,
}

impl From<ModeArg> for DataMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Counts => Self::Counts,
            ModeArg::Reals => Self::Reals,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    #[default]
    Csv,
    Mm,
}

impl From<FormatArg> for InputFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => Self::Csv,
            FormatArg::Mm => Self::MatrixMarket,
        }
    }
}

#[derive(Debug, Default, Args)]
pub struct SynthArgs {
    /// JSON run config; its `synth` object holds the generator settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub features: Option<usize>,
    #[arg(long)]
    pub sources: Option<usize>,
    /// Factors private to each source.
    #[arg(long)]
    pub exclusive: Option<usize>,
    /// Factors available to every source.
    #[arg(long)]
    pub shared: Option<usize>,
    /// Points per source: one value for all, or one per source.
    #[arg(long, value_delimiter = ',')]
    pub points: Vec<usize>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Poisson background rate, or Gaussian noise standard deviation.
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: FormatArg,
}

#[derive(Debug, Default, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// One matrix per source (repeat the flag).
    #[arg(long = "data")]
    pub data: Vec<PathBuf>,
    /// Input format; guessed from the extension when absent.
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    #[arg(long, value_enum)]
    pub model: Option<ModelArg>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub burn: Option<usize>,
    #[arg(long)]
    pub thin: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Keep the Poisson-gamma rate scales at their prior means.
    #[arg(long)]
    pub fixed_scales: bool,
    /// Record per-sweep wall time in the trace and print a summary.
    #[arg(long)]
    pub timing: bool,
}

#[derive(Debug, Default, Args)]
pub struct PerplexityArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory of `nhfa fit`.
    #[arg(long)]
    pub fit: Option<PathBuf>,
    /// Held-out matrices, one per source (repeat the flag).
    #[arg(long = "test")]
    pub test: Vec<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    /// Held-out samples kept per stored training state (R).
    #[arg(long)]
    pub samples: Option<usize>,
    /// Held-out burn-in sweeps.
    #[arg(long)]
    pub burn: Option<usize>,
    /// Training source whose settings seed the held-out sources.
    #[arg(long)]
    pub train_source: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Default, Args)]
pub struct RetrieveArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub fit: Option<PathBuf>,
    /// Query matrices (repeat the flag); documents are taken in order.
    #[arg(long = "query")]
    pub query: Vec<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    /// One label per query document, one per line.
    #[arg(long)]
    pub query_labels: PathBuf,
    /// One label per training document across all training sources.
    #[arg(long)]
    pub train_labels: PathBuf,
    /// Cut-offs of the precision curve.
    #[arg(long, value_delimiter = ',', default_values_t = [1, 5, 10, 20, 50, 100])]
    pub n: Vec<usize>,
    /// Stored state to use (0-based); the last one by default.
    #[arg(long)]
    pub snapshot: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    /// Samples per joint-distribution test.
    #[arg(long, default_value_t = 10_000)]
    pub samples: usize,
    /// Monte Carlo draws for the moment checks.
    #[arg(long, default_value_t = 100_000)]
    pub mc_samples: usize,
    /// Draws per adaptive-rejection KS test.
    #[arg(long, default_value_t = 10_000)]
    pub ks_samples: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub skip_geweke: bool,
    /// Also check that a deliberately broken sampler is caught.
    #[arg(long)]
    pub mutation: bool,
    /// Write `diagnose.json` here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl Default for DiagnoseArgs {
    fn default() -> Self {
        Self { samples: 10_000, mc_samples: 100_000, ks_samples: 10_000, seed: None, skip_geweke: false, mutation: false, out: None }
    }
}
