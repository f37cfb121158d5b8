//! Held-out inference with frozen training factors, and the Monte Carlo
//! predictive likelihood built from it.

use serde::{Deserialize, Serialize};

use crate::data::SourceDataset;
use crate::dist::{log_sum_exp, RngStream};
use crate::error::{Error, Result};
use crate::likelihood::{ggm, pgm, GgmParams, PgmParams};
use crate::rhbp::{Assignments, AuxState, Concentrations};
use crate::scalar::Scalar;

use super::state::{ModelState, Params, Priors};
use super::sweep::{Sampler, SweepConfig};

const HELDOUT_STREAM: u64 = 1 << 40;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PredictiveConfig {
    /// Held-out samples kept per stored training state.
    pub samples: usize,
    pub burn_in: usize,
    /// Training source whose concentration and noise settings seed the
    /// held-out sources.
    pub train_source: usize,
    pub seed: u64,
}

impl Default for PredictiveConfig {
    fn default() -> Self {
        Self { samples: 10, burn_in: 20, train_source: 0, seed: 0 }
    }
}

/// One held-out draw, paired with the training state (index into the stored
/// snapshots) whose `Φ` it was drawn under.
#[derive(Clone, Debug)]
pub struct HeldoutSample {
    pub snapshot: usize,
    pub state: ModelState,
}

fn heldout_start(train: &ModelState, test: &SourceDataset, src: usize, rng: &mut RngStream) -> Result<ModelState> {
    let n_points = test.n_points();
    let jt = n_points.len();
    let kd = train.k_dagger();
    if src >= train.conc.alpha.len() {
        return Err(Error::InvalidArgument(format!("training source {src} does not exist")));
    }
    let m = train.params.phi().first().map_or(0, Vec::len);
    if m != test.n_features() {
        return Err(Error::DimensionMismatch(format!("test data has {} features, factors have {m}", test.n_features())));
    }
    let params = match &train.params {
        Params::Pgm(p) => {
            let mut hyper = p.hyper.clone();
            hyper.b_w = vec![p.hyper.b_w[src]; jt];
            hyper.resample_scales = false;
            let mut q = PgmParams::from_prior(m, &n_points, 0, hyper, rng)?;
            q.lambda = vec![p.lambda[src]; jt];
            for _ in 0..kd {
                q.push_prior_column(m, &n_points, rng)?;
            }
            q.phi = p.phi.clone();
            Params::Pgm(q)
        }
        Params::Ggm(p) => {
            let mut q = GgmParams::from_prior(m, &n_points, 0, p.hyper.clone(), rng)?;
            q.var_phi = p.var_phi;
            q.var_w = vec![p.var_w[src]; jt];
            q.var_noise = vec![p.var_noise[src]; jt];
            for _ in 0..kd {
                q.push_prior_column(m, &n_points, rng)?;
            }
            q.phi = p.phi.clone();
            Params::Ggm(q)
        }
    };
    Ok(ModelState {
        sticks: train.sticks.clone(),
        assign: Assignments::zeros(&n_points, kd),
        conc: Concentrations::new(vec![train.conc.alpha[src]; jt], train.conc.prior_shape, train.conc.prior_rate)?,
        params,
        aux: AuxState::default(),
        iteration: 0,
    })
}

/// For every stored training state runs a frozen-factor chain on the test
/// data (assignments, weights, concentrations and noise resampled) and keeps
/// `samples` post-burn-in states.
pub fn heldout_infer(test: &SourceDataset, snapshots: &[ModelState], config: &PredictiveConfig) -> Result<Vec<HeldoutSample>> {
    if snapshots.is_empty() {
        return Err(Error::InvalidArgument("no training snapshots".into()));
    }
    if config.samples == 0 {
        return Err(Error::InvalidArgument("at least one held-out sample is required".into()));
    }
    let mut out = Vec::with_capacity(snapshots.len() * config.samples);
    for (l, train) in snapshots.iter().enumerate() {
        let base = HELDOUT_STREAM + ((l as u64) << 20);
        let sweep = SweepConfig {
            iterations: config.burn_in + config.samples,
            burn_in: config.burn_in,
            thinning: 1,
            seed: config.seed,
            kind: train.kind(),
            freeze: true,
            resample_hyper_scales: false,
            ..SweepConfig::default()
        };
        let sampler = Sampler::new(test, sweep, Priors::default())?;
        let mut state = heldout_start(train, test, config.train_source, &mut RngStream::new(config.seed, base))?;
        for t in 1..=(config.burn_in + config.samples) {
            let mut rng = RngStream::new(config.seed, base + t as u64);
            sampler.sweep(&mut state, &mut rng)?;
            if t > config.burn_in {
                out.push(HeldoutSample { snapshot: l, state: state.clone() });
            }
        }
    }
    Ok(out)
}

/// `ln p(X̃ | Φ, Z̃, W̃, noise)` for one held-out sample.
pub fn sample_log_likelihood(test: &SourceDataset, sample: &HeldoutSample) -> f64 {
    let s = &sample.state;
    (0..test.n_sources())
        .map(|j| match &s.params {
            Params::Pgm(p) => pgm::source_log_likelihood(test, j, p, &s.assign.sources[j]),
            Params::Ggm(p) => ggm::source_log_likelihood(test, j, p, &s.assign.sources[j]),
        })
        .sum()
}

/// `ln((1/n) Σ exp(ℓ_i))`, evaluated stably.
pub fn log_mean_exp<T: Scalar>(log_liks: &[T]) -> T {
    if log_liks.is_empty() {
        return T::neg_infinity();
    }
    log_sum_exp(log_liks) - T::of_usize(log_liks.len()).ln()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictiveResult {
    pub log_likelihood: f64,
    /// `(snapshot, log-likelihood)` of every paired draw.
    pub pairs: Vec<(usize, f64)>,
}

/// Monte Carlo predictive log-likelihood averaged over all paired draws.
pub fn predictive_log_likelihood(test: &SourceDataset, samples: &[HeldoutSample]) -> PredictiveResult {
    let pairs: Vec<(usize, f64)> = samples.iter().map(|s| (s.snapshot, sample_log_likelihood(test, s))).collect();
    let lls: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    PredictiveResult { log_likelihood: log_mean_exp(&lls), pairs }
}
