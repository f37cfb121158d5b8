//! Synthetic data, file formats and evaluation metrics.

pub mod io;
pub mod metrics;
pub mod synth;

pub use io::{load_sources, merge_sources, read_csv, read_matrix_market, write_csv, write_matrix_market, InputFormat, LabeledSource};
pub use metrics::{
    infer_test_coefficients, match_factors, perplexity_per_doc, posterior_mean_factors, relative_frobenius_error, retrieval_eval,
    FactorMatch, RetrievalGroundTruth, RetrievalReport,
};
pub use synth::{synth_generate, SynthSpec, SynthTruth};
