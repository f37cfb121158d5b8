//! One Gibbs sweep over the joint state and the chain driver.

use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{DataMode, SourceDataset};
use crate::dist::rng::gamma;
use crate::dist::{RngStream, StirlingTable};
use crate::error::{Error, Result};
use crate::likelihood::{ggm, pgm, CountDecomposition, GgmParams, PgmParams};
use crate::rhbp::{
    compact_state, extend_representation, sample_concentrations, sample_ml, sample_slice, sample_sticks, sample_z_entry,
    stick_prior_sample, z_prior_log_odds, Assignments, AuxState, Concentrations, Mutation, StickState,
};

use super::birth::pgm_birth_death;
use super::joint::log_joint;
use super::split::pgm_split_merge;
use super::state::{ModelKind, ModelState, Params, Priors};

/// Column birth/death and split/merge proposals per Poisson-gamma sweep.
const BIRTH_DEATH_ATTEMPTS: usize = 10;
const SPLIT_MERGE_ATTEMPTS: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub thinning: usize,
    pub seed: u64,
    pub kind: ModelKind,
    /// Held-out mode: sticks and `Φ` stay fixed, no slice or extension.
    pub freeze: bool,
    pub resample_hyper_scales: bool,
    /// Record wall-clock time in the trace (makes traces run-dependent).
    pub timing: bool,
    #[serde(skip)]
    pub mutation: Mutation,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            iterations: 500,
            burn_in: 250,
            thinning: 10,
            seed: 0,
            kind: ModelKind::Pgm,
            freeze: false,
            resample_hyper_scales: true,
            timing: false,
            mutation: Mutation::None,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.thinning == 0 {
            return Err(Error::InvalidArgument("thinning must be at least 1".into()));
        }
        if self.burn_in >= self.iterations && self.iterations > 0 {
            return Err(Error::InvalidArgument(format!("burn-in {} must be below iterations {}", self.burn_in, self.iterations)));
        }
        Ok(())
    }

    /// Whether the state after 1-based sweep `t` is stored.
    pub fn keeps(&self, t: usize) -> bool {
        t > self.burn_in && (t - self.burn_in).is_multiple_of(self.thinning)
    }
}

/// Per-iteration diagnostics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iteration: u64,
    pub active_k: usize,
    pub k_dagger: usize,
    pub rho: f64,
    pub log_joint: f64,
    pub alpha: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub lambda: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub noise_var: Option<Vec<f64>>,
    pub new_sticks: usize,
    pub ars_fallbacks: usize,
    /// Accepted column moves (Poisson-gamma only).
    #[serde(default)]
    pub births: usize,
    #[serde(default)]
    pub deaths: usize,
    #[serde(default)]
    pub splits: usize,
    #[serde(default)]
    pub merges: usize,
    pub seed: u64,
    pub wall_ms: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SweepReport {
    pub new_sticks: usize,
    pub ars_fallbacks: usize,
    pub births: usize,
    pub deaths: usize,
    pub splits: usize,
    pub merges: usize,
    /// Present for the Poisson-gamma model.
    pub decomposition: Option<CountDecomposition>,
}

/// Data-dependent context of a chain: the data, its sparse view and the
/// Stirling table sized for the largest source.
pub struct Sampler<'a> {
    pub data: &'a SourceDataset,
    pub config: SweepConfig,
    pub priors: Priors,
    sparse: Vec<Vec<Vec<(usize, u64)>>>,
    table: StirlingTable<f64>,
    n_points: Vec<usize>,
}

impl<'a> Sampler<'a> {
    pub fn new(data: &'a SourceDataset, config: SweepConfig, priors: Priors) -> Result<Self> {
        config.validate()?;
        priors.validate()?;
        data.check_mode(match config.kind {
            ModelKind::Pgm => DataMode::Counts,
            ModelKind::Ggm => DataMode::Reals,
        })?;
        let n_points = data.n_points();
        let sparse = match config.kind {
            ModelKind::Pgm => data.sources.iter().map(|s| s.matrix.sparse_counts()).collect(),
            ModelKind::Ggm => Vec::new(),
        };
        let max_n = n_points.iter().copied().max().unwrap_or(0).max(1);
        Ok(Self { data, config, priors, sparse, table: StirlingTable::new(max_n + 1), n_points })
    }

    pub fn table(&self) -> &StirlingTable<f64> {
        &self.table
    }

    pub fn n_points(&self) -> &[usize] {
        &self.n_points
    }

    /// `K† = 1` with `β_1 ~ beta(τ0, 1)`, empty assignments and parameters
    /// drawn from their priors.
    pub fn init_state<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<ModelState> {
        let (beta, _) = stick_prior_sample(1.0, self.priors.tau0, rng)?;
        let sticks = StickState::new(vec![beta.max(f64::MIN_POSITIVE)], self.priors.tau0)?;
        let j = self.n_points.len();
        let alpha = (0..j)
            .map(|_| crate::dist::rng::gamma(rng, self.priors.alpha.0, self.priors.alpha.1).map(|a| a.max(1e-300)))
            .collect::<Result<Vec<_>>>()?;
        let conc = Concentrations::new(alpha, self.priors.alpha.0, self.priors.alpha.1)?;
        let m = self.data.n_features();
        let params = match self.config.kind {
            ModelKind::Pgm => {
                Params::Pgm(PgmParams::from_prior(m, &self.n_points, 1, self.priors.pgm_hyper(j, self.config.resample_hyper_scales), rng)?)
            }
            ModelKind::Ggm => Params::Ggm(GgmParams::from_prior(m, &self.n_points, 1, self.priors.ggm.clone(), rng)?),
        };
        Ok(ModelState { sticks, assign: Assignments::zeros(&self.n_points, 1), conc, params, aux: AuxState::default(), iteration: 0 })
    }

    /// One sweep: slice, extension, assignments, compaction, Stirling
    /// auxiliaries, sticks, likelihood parameters, concentrations.
    pub fn sweep<R: Rng + ?Sized>(&self, state: &mut ModelState, rng: &mut R) -> Result<SweepReport> {
        let freeze = self.config.freeze;
        let mut report = SweepReport::default();
        if !freeze {
            sample_slice(&mut state.sticks, &state.assign, rng);
            let ext = extend_representation(&mut state.sticks, &mut state.assign, &state.conc, &mut state.aux, &self.table, rng)?;
            for _ in 0..ext.new_sticks {
                state.params.push_prior_column(self.data.n_features(), &self.n_points, rng)?;
            }
            report.new_sticks = ext.new_sticks;
            report.ars_fallbacks += ext.ars_fallbacks;
        }

        self.update_assignments(state, rng)?;
        if !freeze {
            let keep = compact_state(&mut state.sticks, &mut state.assign)?;
            state.params.truncate(keep);
            if let Params::Pgm(p) = &mut state.params {
                let bd = pgm_birth_death(
                    &self.sparse,
                    &self.n_points,
                    &mut state.sticks,
                    &mut state.assign,
                    &state.conc,
                    p,
                    &self.table,
                    BIRTH_DEATH_ATTEMPTS,
                    rng,
                )?;
                report.births = bd.births;
                report.deaths = bd.deaths;
                let sm = pgm_split_merge(
                    &self.sparse,
                    &self.n_points,
                    &mut state.sticks,
                    &mut state.assign,
                    &state.conc,
                    p,
                    &self.table,
                    SPLIT_MERGE_ATTEMPTS,
                    rng,
                )?;
                report.splits = sm.splits;
                report.merges = sm.merges;
            }
        }

        sample_ml(&state.sticks, &state.assign, &state.conc, &mut state.aux, &self.table, self.config.mutation, rng)?;
        if !freeze {
            report.ars_fallbacks += sample_sticks(&mut state.sticks, &state.assign, &state.conc, &state.aux, &self.table, rng)?;
        }

        match &mut state.params {
            Params::Pgm(p) => {
                let (dec, sums) = pgm::decompose_counts(&self.sparse, p, &state.assign, rng)?;
                dec.verify()?;
                if !freeze {
                    pgm::sample_phi(p, &sums, &state.assign, rng)?;
                }
                pgm::sample_w(p, &sums, &state.assign, rng)?;
                pgm::sample_lambda(p, &sums, self.data.n_features(), &self.n_points, rng)?;
                if p.hyper.resample_scales && !freeze {
                    pgm::resample_hyper_scales(p, &state.assign, rng)?;
                }
                report.decomposition = Some(dec);
            }
            Params::Ggm(p) => {
                if !freeze {
                    ggm::sample_phi(p, self.data, &state.assign, rng)?;
                }
                ggm::sample_w(p, self.data, &state.assign, rng)?;
                let var_phi = p.var_phi;
                ggm::sample_variances(p, self.data, &state.assign, rng)?;
                if freeze {
                    p.var_phi = var_phi;
                }
            }
        }

        sample_concentrations(&state.sticks, &state.assign, &mut state.conc, &mut state.aux, &self.table, !freeze, rng)?;
        state.iteration += 1;
        if cfg!(debug_assertions) {
            state.check_invariants()?;
        }
        Ok(report)
    }

    /// Columns eligible for assignment updates: those at or above the slice,
    /// or every column but the trailing one when the sticks are frozen.
    fn eligible(&self, sticks: &StickState) -> Vec<usize> {
        let kd = sticks.k_dagger();
        if self.config.freeze {
            (0..kd.saturating_sub(1)).collect()
        } else {
            (0..kd).filter(|&k| sticks.betas[k] >= sticks.rho).collect()
        }
    }

    fn update_assignments<R: Rng + ?Sized>(&self, state: &mut ModelState, rng: &mut R) -> Result<()> {
        let cols = self.eligible(&state.sticks);
        if self.config.freeze {
            // finite beta-Bernoulli model over the represented columns
            state.sticks.rho = 0.0;
        }
        let ModelState { sticks, assign, conc, params, .. } = state;
        match params {
            Params::Pgm(p) => {
                let mut phi_sums: Vec<f64> = p.phi.iter().map(|c| c.iter().sum()).collect();
                for j in 0..assign.sources.len() {
                    for i in 0..self.n_points[j] {
                        let mut cache = pgm::RowRates::new(p, j, i, &assign.sources[j], &self.sparse[j][i]);
                        for &k in &cols {
                            let odds = self.prior_log_odds(j, i, k, sticks, assign, conc);
                            let z = self.pgm_entry(p, &mut cache, &mut phi_sums, assign, (j, i, k), odds, rng)?;
                            assign.sources[j].set(i, k, z);
                        }
                    }
                }
            }
            Params::Ggm(p) => {
                let phi_sq: Vec<f64> = p.phi.iter().map(|c| c.iter().map(|x| x * x).sum()).collect();
                for j in 0..assign.sources.len() {
                    let x = self.data.matrix(j);
                    let (vw, vn) = (p.var_w[j], p.var_noise[j]);
                    for i in 0..self.n_points[j] {
                        let mut cache = ggm::RowResidual::new(x.column(i), p, j, i, &assign.sources[j]);
                        for &k in &cols {
                            let w_cur = p.w[j][k][i];
                            let on = assign.sources[j].get(i, k);
                            let entry = cache.collapsed(&p.phi[k], phi_sq[k], w_cur, on, vw, vn);
                            let z = self.draw_z(j, i, k, sticks, assign, conc, entry.log_ratio, rng)?;
                            let w_new = if z {
                                crate::dist::rng::normal(rng, entry.post_mean, entry.post_var.sqrt())
                            } else {
                                crate::dist::rng::normal(rng, 0.0, vw.sqrt())
                            };
                            p.w[j][k][i] = w_new;
                            cache.update(&p.phi[k], on.then_some(w_cur), z.then_some(w_new));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// `ln P(z=1) - ln P(z=0)` under the prior. Frozen sticks use the plain
    /// finite beta-Bernoulli model, with no slice.
    fn prior_log_odds(&self, j: usize, i: usize, k: usize, sticks: &StickState, assign: &Assignments, conc: &Concentrations) -> f64 {
        if self.config.freeze {
            let z = &assign.sources[j];
            let n_minus = (z.count(k) - usize::from(z.get(i, k))) as f64;
            let n = z.n_points() as f64;
            let a = conc.alpha[j];
            let beta = sticks.betas[k].min(1.0 - 1e-12);
            (n_minus + a * beta).ln() - (n - 1.0 - n_minus + a * (1.0 - beta)).ln()
        } else {
            z_prior_log_odds(j, i, k, sticks, assign, conc.alpha[j])
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn draw_z<R: Rng + ?Sized>(
        &self,
        j: usize,
        i: usize,
        k: usize,
        sticks: &StickState,
        assign: &mut Assignments,
        conc: &Concentrations,
        llr: f64,
        rng: &mut R,
    ) -> Result<bool> {
        if self.config.freeze {
            let odds = self.prior_log_odds(j, i, k, sticks, assign, conc) + llr;
            let p1 = 1.0 / (1.0 + (-odds).exp());
            let bit = rng.random::<f64>() < p1;
            assign.sources[j].set(i, k, bit);
            Ok(bit)
        } else {
            sample_z_entry(j, i, k, sticks, assign, conc, llr, rng)
        }
    }

    /// Metropolis-Hastings toggle of one Poisson-gamma assignment.
    ///
    /// While `z = 0` the entry's weight is a prior draw, so switching on
    /// proposes a weight from [`pgm::RowRates::weight_proposal`] and
    /// switching off redraws it from the prior. When no other data point in
    /// any source uses the column, its factor is likewise prior-distributed
    /// and is proposed together with the weight (birth) or redrawn from the
    /// prior (death). Frozen factors are never replaced.
    #[allow(clippy::too_many_arguments)]
    fn pgm_entry<R: Rng + ?Sized>(
        &self,
        p: &mut PgmParams,
        cache: &mut pgm::RowRates<'_>,
        phi_sums: &mut [f64],
        assign: &Assignments,
        (j, i, k): (usize, usize, usize),
        prior_odds: f64,
        rng: &mut R,
    ) -> Result<bool> {
        let on = assign.sources[j].get(i, k);
        let floor = p.lambda[j];
        let (a_w, b_w, a_phi, b_phi) = (p.hyper.a_w, p.hyper.b_w[j], p.hyper.a_phi, p.hyper.b_phi);
        let w_cur = p.w[j][k][i];
        if on {
            cache.apply(&p.phi[k], w_cur, false, floor);
        }
        let alone = !self.config.freeze && assign.total_count(k) == usize::from(on);
        let ln_prior_phi = |phi: &[f64]| phi.iter().map(|&x| pgm::gamma_ln_pdf(x, a_phi, b_phi)).sum::<f64>();
        let accept = |log_a: f64, rng: &mut R| log_a >= 0.0 || rng.random::<f64>().ln() < log_a;

        let z = if alone {
            if on {
                let q = cache.factor_proposal(w_cur, a_phi, b_phi);
                let ln_q: f64 = q.iter().zip(&p.phi[k]).map(|(g, &x)| g.ln_pdf(x)).sum();
                let log_a = -(prior_odds + ln_prior_phi(&p.phi[k]) + cache.gain(&p.phi[k], phi_sums[k], w_cur) - ln_q);
                if accept(log_a, rng) {
                    p.phi[k] = (0..p.phi[k].len()).map(|_| gamma(rng, a_phi, b_phi)).collect::<Result<_>>()?;
                    phi_sums[k] = p.phi[k].iter().sum();
                    p.w[j][k][i] = gamma(rng, a_w, b_w)?.max(f64::MIN_POSITIVE);
                    false
                } else {
                    true
                }
            } else {
                let w = gamma(rng, a_w, b_w)?.max(f64::MIN_POSITIVE);
                let q = cache.factor_proposal(w, a_phi, b_phi);
                let phi = q.iter().map(|g| g.sample(rng)).collect::<Result<Vec<f64>>>()?;
                let ln_q: f64 = q.iter().zip(&phi).map(|(g, &x)| g.ln_pdf(x)).sum();
                let sum: f64 = phi.iter().sum();
                let log_a = prior_odds + ln_prior_phi(&phi) + cache.gain(&phi, sum, w) - ln_q;
                if accept(log_a, rng) {
                    p.phi[k] = phi;
                    phi_sums[k] = sum;
                    p.w[j][k][i] = w;
                    true
                } else {
                    false
                }
            }
        } else {
            let q = cache.weight_proposal(&p.phi[k], phi_sums[k], a_w, b_w);
            if on {
                let log_a =
                    -(prior_odds + pgm::gamma_ln_pdf(w_cur, a_w, b_w) + cache.gain(&p.phi[k], phi_sums[k], w_cur) - q.ln_pdf(w_cur));
                if accept(log_a, rng) {
                    p.w[j][k][i] = gamma(rng, a_w, b_w)?.max(f64::MIN_POSITIVE);
                    false
                } else {
                    true
                }
            } else {
                let w = q.sample(rng)?;
                let log_a = prior_odds + pgm::gamma_ln_pdf(w, a_w, b_w) + cache.gain(&p.phi[k], phi_sums[k], w) - q.ln_pdf(w);
                if accept(log_a, rng) {
                    p.w[j][k][i] = w;
                    true
                } else {
                    false
                }
            }
        };
        if z {
            cache.apply(&p.phi[k], p.w[j][k][i], true, floor);
        }
        Ok(z)
    }

    pub fn trace_record(&self, state: &ModelState, report: &SweepReport, started: Option<Instant>) -> Result<TraceRecord> {
        let lj = log_joint(state, self.data, &self.table)?;
        if !lj.is_finite() {
            return Err(Error::StateCorruption(format!("log joint is {lj} after sweep {}", state.iteration)));
        }
        let (lambda, noise_var) = match &state.params {
            Params::Pgm(p) => (Some(p.lambda.clone()), None),
            Params::Ggm(p) => (None, Some(p.var_noise.clone())),
        };
        Ok(TraceRecord {
            iteration: state.iteration,
            active_k: state.active_k(),
            k_dagger: state.k_dagger(),
            rho: state.sticks.rho,
            log_joint: lj,
            alpha: state.conc.alpha.clone(),
            lambda,
            noise_var,
            new_sticks: report.new_sticks,
            ars_fallbacks: report.ars_fallbacks,
            births: report.births,
            deaths: report.deaths,
            splits: report.splits,
            merges: report.merges,
            seed: self.config.seed,
            wall_ms: started.map(|t| t.elapsed().as_secs_f64() * 1e3),
        })
    }

    /// RNG stream of 1-based sweep `t`; stream 0 is initialization.
    pub fn sweep_rng(&self, t: u64) -> RngStream {
        RngStream::new(self.config.seed, t)
    }

    /// Runs sweeps `state.iteration + 1 ..= config.iterations`, calling
    /// `observe` after each one. Resuming from a stored state reproduces the
    /// uninterrupted chain because each sweep owns its RNG stream.
    pub fn run_from(
        &self,
        state: &mut ModelState,
        mut observe: impl FnMut(&ModelState, &SweepReport, &TraceRecord) -> Result<()>,
    ) -> Result<()> {
        while (state.iteration as usize) < self.config.iterations {
            let t = state.iteration + 1;
            let mut rng = self.sweep_rng(t);
            let started = self.config.timing.then(Instant::now);
            let report = self.sweep(state, &mut rng)?;
            let record = self.trace_record(state, &report, started)?;
            observe(state, &report, &record)?;
        }
        Ok(())
    }
}

pub struct ChainOutput {
    pub snapshots: Vec<ModelState>,
    pub trace: Vec<TraceRecord>,
    pub last: ModelState,
}

/// Runs a chain from the `K† = 1` initialization and keeps every
/// `thinning`-th post-burn-in state.
pub fn run_chain(data: &SourceDataset, config: SweepConfig, priors: Priors) -> Result<ChainOutput> {
    let sampler = Sampler::new(data, config, priors)?;
    let mut state = sampler.init_state(&mut RngStream::new(sampler.config.seed, 0))?;
    let mut snapshots = Vec::new();
    let mut trace = Vec::with_capacity(sampler.config.iterations);
    sampler.run_from(&mut state, |s, _, rec| {
        if sampler.config.keeps(s.iteration as usize) {
            snapshots.push(s.clone());
        }
        trace.push(rec.clone());
        Ok(())
    })?;
    Ok(ChainOutput { snapshots, trace, last: state })
}

/// One sweep with the chain's per-sweep stream.
pub fn gibbs_sweep(sampler: &Sampler<'_>, state: &mut ModelState) -> Result<SweepReport> {
    let mut rng = sampler.sweep_rng(state.iteration + 1);
    sampler.sweep(state, &mut rng)
}
