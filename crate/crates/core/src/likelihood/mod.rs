//! The two data models layered on the shared assignments: Poisson-gamma for
//! counts and Gaussian for reals.

pub mod ggm;
pub mod pgm;

pub use ggm::{GgmHyper, GgmParams};
pub use pgm::{CountDecomposition, PgmHyper, PgmParams};
