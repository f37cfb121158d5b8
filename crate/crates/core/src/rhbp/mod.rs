//! Restricted hierarchical beta process: explicitly represented parent sticks,
//! per-source binary assignments with the source weights integrated out, and
//! the slice/auxiliary-variable updates that keep the representation finite.

pub mod extend;
pub mod prior;
pub mod state;
pub mod update;

pub use extend::{extend_representation, sample_new_stick, sample_stick_marginal, sample_v, ExtensionReport, StickDraw};
pub use prior::{
    beta_star, marginal_inactive_col_log_prob, sample_slice, stick_log_density, stick_prior_sample, tail_inactive_log_prob, InactiveTail,
};
pub use state::{Assignments, AuxState, Concentrations, SourceAssignments, StickState};
pub use update::{
    compact_state, sample_alpha, sample_beta_active, sample_concentrations, sample_l, sample_m, sample_ml, sample_sticks, sample_z_entry,
    z_prior_log_odds, Mutation,
};
