use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::likelihood::{GgmHyper, GgmParams, PgmHyper, PgmParams};
use crate::rhbp::{Assignments, AuxState, Concentrations, StickState};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Pgm,
    Ggm,
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pgm" => Ok(Self::Pgm),
            "ggm" => Ok(Self::Ggm),
            other => Err(Error::InvalidArgument(format!("unknown model kind {other:?}"))),
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Pgm => "pgm",
            Self::Ggm => "ggm",
        })
    }
}

/// Prior settings shared by both models.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Priors {
    pub tau0: f64,
    /// Gamma (shape, rate) on each `α_j`.
    pub alpha: (f64, f64),
    /// Poisson-gamma shapes/rates for `Φ`, `W`, `λ`.
    pub phi: (f64, f64),
    pub w: (f64, f64),
    pub lambda: (f64, f64),
    pub ggm: GgmHyper,
}

impl Default for Priors {
    fn default() -> Self {
        Self { tau0: 1.0, alpha: (1.0, 1.0), phi: (1.0, 1.0), w: (1.0, 1.0), lambda: (1.0, 1.0), ggm: GgmHyper::default() }
    }
}

impl Priors {
    pub fn validate(&self) -> Result<()> {
        let pos = |(a, b): (f64, f64)| a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite();
        let all = [self.alpha, self.phi, self.w, self.lambda, self.ggm.phi, self.ggm.w, self.ggm.noise];
        if !(self.tau0 > 0.0 && self.tau0.is_finite()) || !all.into_iter().all(pos) {
            return Err(Error::InvalidArgument("priors must be positive and finite".into()));
        }
        Ok(())
    }

    pub fn pgm_hyper(&self, n_sources: usize, resample_scales: bool) -> PgmHyper {
        PgmHyper {
            a_phi: self.phi.0,
            b_phi: self.phi.1,
            a_w: self.w.0,
            b_w: vec![self.w.1; n_sources],
            a_lambda: self.lambda.0,
            b_lambda: self.lambda.1,
            resample_scales,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Params {
    Pgm(PgmParams),
    Ggm(GgmParams),
}

impl Params {
    pub fn kind(&self) -> ModelKind {
        match self {
            Self::Pgm(_) => ModelKind::Pgm,
            Self::Ggm(_) => ModelKind::Ggm,
        }
    }

    pub fn phi(&self) -> &[Vec<f64>] {
        match self {
            Self::Pgm(p) => &p.phi,
            Self::Ggm(p) => &p.phi,
        }
    }

    pub fn w(&self) -> &[Vec<Vec<f64>>] {
        match self {
            Self::Pgm(p) => &p.w,
            Self::Ggm(p) => &p.w,
        }
    }

    pub fn n_cols(&self) -> usize {
        self.phi().len()
    }

    pub fn push_prior_column<R: Rng + ?Sized>(&mut self, n_features: usize, n_points: &[usize], rng: &mut R) -> Result<()> {
        match self {
            Self::Pgm(p) => p.push_prior_column(n_features, n_points, rng),
            Self::Ggm(p) => p.push_prior_column(n_features, n_points, rng),
        }
    }

    pub fn truncate(&mut self, n_cols: usize) {
        match self {
            Self::Pgm(p) => p.truncate(n_cols),
            Self::Ggm(p) => p.truncate(n_cols),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Pgm(p) => p.validate(),
            Self::Ggm(p) => p.validate(),
        }
    }
}

/// The full Markov-chain state.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelState {
    pub sticks: StickState,
    pub assign: Assignments,
    pub conc: Concentrations,
    pub params: Params,
    pub aux: AuxState,
    /// Number of sweeps applied so far.
    pub iteration: u64,
}

impl ModelState {
    pub fn kind(&self) -> ModelKind {
        self.params.kind()
    }

    pub fn k_dagger(&self) -> usize {
        self.sticks.k_dagger()
    }

    pub fn active_k(&self) -> usize {
        self.assign.active_k()
    }

    /// Checks every structural invariant: stick ordering, matching column
    /// counts, cached assignment sums, the trailing inactive column and
    /// parameter positivity.
    pub fn check_invariants(&self) -> Result<()> {
        self.sticks.validate()?;
        let kd = self.k_dagger();
        if self.assign.n_cols() != kd || self.params.n_cols() != kd {
            return Err(Error::StateCorruption(format!(
                "column counts differ: sticks {kd}, Z {}, params {}",
                self.assign.n_cols(),
                self.params.n_cols()
            )));
        }
        for (j, z) in self.assign.sources.iter().enumerate() {
            z.check_counts()?;
            if self.params.w()[j].iter().any(|c| c.len() != z.n_points()) {
                return Err(Error::StateCorruption(format!("W_{j} has the wrong number of rows")));
            }
        }
        if self.assign.is_active(kd - 1) {
            return Err(Error::StateCorruption("last represented stick is active".into()));
        }
        if self.conc.alpha.iter().any(|a| !(*a > 0.0 && a.is_finite())) {
            return Err(Error::StateCorruption("non-positive concentration".into()));
        }
        self.params.validate()
    }
}
