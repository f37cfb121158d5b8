//! Sweep orchestration, chains, the log joint, held-out prediction and the
//! joint-distribution test.

pub mod birth;
pub mod geweke;
pub mod heldout;
pub mod joint;
pub mod snapshot;
mod split;
pub mod state;
pub mod sweep;

pub use geweke::{geweke_check, GewekeConfig, GewekeStat};
pub use heldout::{heldout_infer, log_mean_exp, predictive_log_likelihood, HeldoutSample, PredictiveConfig, PredictiveResult};
pub use joint::{log_joint, log_joint_terms};
pub use snapshot::{snapshot_from_json, snapshot_to_json};
pub use state::{ModelKind, ModelState, Params, Priors};
pub use sweep::{gibbs_sweep, run_chain, ChainOutput, Sampler, SweepConfig, SweepReport, TraceRecord};
