pub mod data;
pub mod dist;
pub mod engine;
pub mod error;
pub mod eval;
pub mod likelihood;
pub mod rhbp;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub use data::{DataMode, Source, SourceDataset, SourceMatrix};
pub use engine::{ModelKind, ModelState, Priors, Sampler, SweepConfig};

/// Double-precision instantiations of the generic kernels.
pub type StirlingTable64 = dist::StirlingTable<f64>;
