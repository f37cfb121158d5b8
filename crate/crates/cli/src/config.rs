//! Optional JSON run configuration. Flags override file values, and the seed
//! falls back to `NHFA_SEED`, then 0.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use nhfa::engine::{ModelKind, PredictiveConfig, SweepConfig};
use nhfa::eval::{InputFormat, SynthSpec};
use nhfa::Priors;

use crate::error::{CliError, CliResult};

pub const SEED_ENV: &str = "NHFA_SEED";

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Subcommand the file was written for; checked when present.
    pub command: Option<String>,
    #[serde(default)]
    pub inputs: Vec<PathBuf>,
    #[serde(default)]
    pub test: Vec<PathBuf>,
    pub format: Option<InputFormat>,
    pub model: Option<ModelKind>,
    pub sweep: Option<SweepConfig>,
    pub predictive: Option<PredictiveConfig>,
    pub priors: Option<Priors>,
    pub synth: Option<SynthSpec>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>, command: &str) -> CliResult<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("reading {}: {e}", path.display())))?;
        let cfg: Self = serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        if let Some(c) = &cfg.command {
            if c != command {
                return Err(CliError::Config(format!("{} is a `{c}` config, not `{command}`", path.display())));
            }
        }
        Ok(cfg)
    }

    /// Flag, then the file's top-level seed, then the environment, then
    /// `fallback` (a seed nested in one of the file's blocks, or 0).
    pub fn seed(&self, flag: Option<u64>, fallback: u64) -> CliResult<u64> {
        if let Some(s) = flag.or(self.seed) {
            return Ok(s);
        }
        match std::env::var(SEED_ENV) {
            Ok(v) => v.trim().parse().map_err(|_| CliError::Config(format!("{SEED_ENV}={v:?} is not an unsigned integer"))),
            Err(_) => Ok(fallback),
        }
    }

    pub fn out(&self, flag: Option<&Path>) -> CliResult<PathBuf> {
        flag.map(Path::to_path_buf).or_else(|| self.out.clone()).ok_or_else(|| CliError::Config("no output directory (--out)".into()))
    }

    pub fn paths(flag: &[PathBuf], file: &[PathBuf], what: &str) -> CliResult<Vec<PathBuf>> {
        let p = if flag.is_empty() { file.to_vec() } else { flag.to_vec() };
        if p.is_empty() {
            return Err(CliError::Config(format!("no {what} given")));
        }
        Ok(p)
    }
}

/// `.mtx`/`.mm` files are MatrixMarket, anything else CSV.
pub fn guess_format(path: &Path) -> InputFormat {
    match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("mtx" | "mm") => InputFormat::MatrixMarket,
        _ => InputFormat::Csv,
    }
}
