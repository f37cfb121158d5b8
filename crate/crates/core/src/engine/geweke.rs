//! Joint-distribution ("getting it right") test: forward samples from the
//! prior against a chain that alternates a sweep with regenerating the data.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{SourceDataset, SourceMatrix};
use crate::dist::rng::{gamma, normal, poisson, uniform};
use crate::dist::RngStream;
use crate::error::Result;
use crate::likelihood::{GgmParams, PgmParams};
use crate::rhbp::{stick_prior_sample, Assignments, AuxState, Concentrations, Mutation, StickState};

use super::state::{ModelKind, ModelState, Params, Priors};
use super::sweep::{Sampler, SweepConfig};

/// Sticks below this weight are treated as never used by the forward
/// simulator; the chance of a miss is about `N · 1e-14`.
const FORWARD_STICK_FLOOR: f64 = 1e-14;

#[derive(Clone, Debug, PartialEq)]
pub struct GewekeConfig {
    pub kind: ModelKind,
    pub n_features: usize,
    pub n_points: Vec<usize>,
    pub samples: usize,
    /// Successive-conditional rounds (sweep, then redraw the data) per
    /// recorded chain sample. The tiny Poisson model lingers at low K for
    /// hundreds of rounds, which short unthinned chains cannot size.
    pub rounds_per_sample: usize,
    pub seed: u64,
    pub priors: Priors,
    pub mutation: Mutation,
}

impl GewekeConfig {
    /// Tiny two-source model; precision priors with shape 3 keep the tracked
    /// moments finite.
    pub fn tiny(kind: ModelKind, samples: usize, seed: u64) -> Self {
        let mut priors = Priors { alpha: (2.0, 2.0), ..Priors::default() };
        priors.ggm.phi = (3.0, 3.0);
        priors.ggm.w = (3.0, 3.0);
        priors.ggm.noise = (3.0, 3.0);
        Self { kind, n_features: 3, n_points: vec![4, 4], samples, rounds_per_sample: 4, seed, priors, mutation: Mutation::None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GewekeStat {
    pub name: String,
    pub forward_mean: f64,
    pub chain_mean: f64,
    pub z: f64,
}

/// Exact draw of state and data from the prior.
pub fn forward_sample<R: Rng + ?Sized>(cfg: &GewekeConfig, rng: &mut R) -> Result<(ModelState, SourceDataset)> {
    let p = &cfg.priors;
    let alpha = (0..cfg.n_points.len()).map(|_| gamma(rng, p.alpha.0, p.alpha.1).map(|a| a.max(1e-300))).collect::<Result<Vec<_>>>()?;
    let mut betas = Vec::new();
    let mut prev = 1.0;
    loop {
        let (b, _) = stick_prior_sample(prev, p.tau0, rng)?;
        let b = b.max(f64::MIN_POSITIVE);
        betas.push(b);
        prev = b;
        if b < FORWARD_STICK_FLOOR {
            break;
        }
    }
    let mut assign = Assignments::zeros(&cfg.n_points, betas.len());
    for (k, &b) in betas.iter().enumerate() {
        for (j, z) in assign.sources.iter_mut().enumerate() {
            let a = alpha[j];
            let mut used = 0usize;
            for i in 0..z.n_points() {
                let p1 = (used as f64 + a * b) / (i as f64 + a);
                if uniform(rng) < p1 {
                    z.set(i, k, true);
                    used += 1;
                }
            }
        }
    }
    let keep = assign.last_active().map_or(1, |k| k + 2);
    betas.truncate(keep);
    assign.truncate(keep);
    let j = cfg.n_points.len();
    let params = match cfg.kind {
        ModelKind::Pgm => Params::Pgm(PgmParams::from_prior(cfg.n_features, &cfg.n_points, keep, p.pgm_hyper(j, false), rng)?),
        ModelKind::Ggm => Params::Ggm(GgmParams::from_prior(cfg.n_features, &cfg.n_points, keep, p.ggm.clone(), rng)?),
    };
    let state = ModelState {
        sticks: StickState::new(betas, p.tau0)?,
        assign,
        conc: Concentrations::new(alpha, p.alpha.0, p.alpha.1)?,
        params,
        aux: AuxState::default(),
        iteration: 0,
    };
    let data = generate_data(&state, cfg.n_features, rng)?;
    Ok((state, data))
}

/// Draws data from the likelihood given the state.
pub fn generate_data<R: Rng + ?Sized>(state: &ModelState, n_features: usize, rng: &mut R) -> Result<SourceDataset> {
    let mut mats = Vec::with_capacity(state.assign.sources.len());
    for (j, z) in state.assign.sources.iter().enumerate() {
        let mut x = SourceMatrix::zeros(n_features, z.n_points());
        for i in 0..z.n_points() {
            match &state.params {
                Params::Pgm(p) => {
                    for (m, mu) in p.rates(j, i, z).into_iter().enumerate() {
                        x.set(m, i, poisson(rng, mu)? as f64);
                    }
                }
                Params::Ggm(p) => {
                    let sd = p.var_noise[j].sqrt();
                    for (m, mu) in p.mean(j, i, z).into_iter().enumerate() {
                        x.set(m, i, normal(rng, mu, sd));
                    }
                }
            }
        }
        mats.push(x);
    }
    SourceDataset::from_matrices(mats)
}

pub const STAT_NAMES: [&str; 5] = ["active_k", "beta_1", "mean_alpha", "mean_phi", "noise"];

/// Tracked statistics; the last is mean `λ_j` (Poisson) or mean `ln σ²_nj`
/// (Gaussian).
pub fn statistics(state: &ModelState) -> [f64; 5] {
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len().max(1) as f64;
    let phi: Vec<f64> = state.params.phi().iter().flatten().copied().collect();
    let noise = match &state.params {
        Params::Pgm(p) => mean(&p.lambda),
        Params::Ggm(p) => mean(&p.var_noise.iter().map(|v| v.ln()).collect::<Vec<_>>()),
    };
    [state.active_k() as f64, state.sticks.betas[0], mean(&state.conc.alpha), mean(&phi), noise]
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0).max(1.0);
    (m, v)
}

/// Variance of the mean of an autocorrelated series, from Geyer's initial
/// monotone sequence estimate of the summed autocovariances. Unlike batch
/// means with a fixed batch count it does not collapse when the
/// autocorrelation time exceeds the batch length.
pub fn autocorrelated_mean_var(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 4 {
        return mean_var(xs).1 / n.max(1) as f64;
    }
    let m = xs.iter().sum::<f64>() / n as f64;
    let d: Vec<f64> = xs.iter().map(|x| x - m).collect();
    let acov = |k: usize| d[..n - k].iter().zip(&d[k..]).map(|(a, b)| a * b).sum::<f64>() / n as f64;
    let g0 = acov(0);
    let (mut sum, mut prev) = (0.0, f64::INFINITY);
    let mut i = 0;
    while 2 * i + 1 < n {
        let pair = acov(2 * i) + acov(2 * i + 1);
        if pair <= 0.0 {
            break;
        }
        prev = pair.min(prev);
        sum += prev;
        i += 1;
    }
    (2.0 * sum - g0).max(0.0) / n as f64
}

/// Returns one z-score per statistic in [`STAT_NAMES`].
pub fn geweke_check(cfg: &GewekeConfig) -> Result<Vec<GewekeStat>> {
    let mut fwd_rng = RngStream::new(cfg.seed, 0);
    let mut forward: Vec<[f64; 5]> = Vec::with_capacity(cfg.samples);
    for _ in 0..cfg.samples {
        forward.push(statistics(&forward_sample(cfg, &mut fwd_rng)?.0));
    }

    let mut chain_rng = RngStream::new(cfg.seed, 1);
    let (mut state, mut data) = forward_sample(cfg, &mut chain_rng)?;
    let sweep = SweepConfig {
        iterations: usize::MAX,
        burn_in: 0,
        thinning: 1,
        seed: cfg.seed,
        kind: cfg.kind,
        freeze: false,
        resample_hyper_scales: false,
        timing: false,
        mutation: cfg.mutation,
    };
    let mut chain: Vec<[f64; 5]> = Vec::with_capacity(cfg.samples);
    for _ in 0..cfg.samples {
        for _ in 0..cfg.rounds_per_sample.max(1) {
            let sampler = Sampler::new(&data, sweep.clone(), cfg.priors.clone())?;
            sampler.sweep(&mut state, &mut chain_rng)?;
            data = generate_data(&state, cfg.n_features, &mut chain_rng)?;
        }
        chain.push(statistics(&state));
    }

    Ok(STAT_NAMES
        .iter()
        .enumerate()
        .map(|(s, name)| {
            let f: Vec<f64> = forward.iter().map(|r| r[s]).collect();
            let c: Vec<f64> = chain.iter().map(|r| r[s]).collect();
            let (fm, fv) = mean_var(&f);
            let cm = c.iter().sum::<f64>() / c.len() as f64;
            let se = (fv / f.len() as f64 + autocorrelated_mean_var(&c)).sqrt();
            GewekeStat { name: (*name).to_string(), forward_mean: fm, chain_mean: cm, z: (fm - cm) / se }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::rng::normal;

    fn ar1(phi: f64, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = RngStream::new(seed, 0);
        let mut x = 0.0;
        (0..n)
            .map(|_| {
                x = phi * x + normal(&mut rng, 0.0, 1.0);
                x
            })
            .collect()
    }

    #[test]
    fn mean_variance_of_independent_draws() {
        let xs = ar1(0.0, 20_000, 1);
        let v = autocorrelated_mean_var(&xs);
        assert!((v * 20_000.0 - 1.0).abs() < 0.1, "{}", v * 20_000.0);
    }

    #[test]
    fn mean_variance_of_a_sticky_series() {
        // AR(1), unit innovations: n·Var(mean) → 1/(1-φ)² = 400.
        let xs = ar1(0.95, 200_000, 2);
        let v = autocorrelated_mean_var(&xs) * 200_000.0;
        assert!((v / 400.0 - 1.0).abs() < 0.2, "{v}");
    }
}
