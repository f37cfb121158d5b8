use crate::data::SourceDataset;
use crate::dist::special::ln_rising;
use crate::dist::StirlingTable;
use crate::error::Result;
use crate::likelihood::{ggm, pgm};
use crate::rhbp::{prior::source_list, stick_log_density, InactiveTail};

use super::state::{ModelState, Params};

/// Log joint density of the state and data, auxiliaries excluded.
///
/// Terms: stick-breaking chain plus the probability that nothing past the
/// last stick is used; per-(source, column) beta-Bernoulli marginals of `Z`;
/// concentration and parameter priors; data likelihood.
pub fn log_joint(state: &ModelState, data: &SourceDataset, table: &StirlingTable<f64>) -> Result<f64> {
    let terms = log_joint_terms(state, data, table)?;
    Ok(terms.iter().sum())
}

/// `[sticks, assignments, concentrations, parameters, likelihood]`.
pub fn log_joint_terms(state: &ModelState, data: &SourceDataset, table: &StirlingTable<f64>) -> Result<[f64; 5]> {
    let sticks = &state.sticks;
    let mut prev = 1.0;
    let mut lp_sticks = 0.0;
    for &b in &sticks.betas {
        lp_sticks += stick_log_density(b, prev, sticks.tau0);
        prev = b;
    }
    let tail = InactiveTail::new(&source_list(&state.conc.alpha, &state.assign), sticks.tau0, table)?;
    lp_sticks += tail.log_prob(prev);

    let mut lp_z = 0.0;
    for (j, z) in state.assign.sources.iter().enumerate() {
        let a = state.conc.alpha[j];
        let n = z.n_points();
        for (k, &b) in sticks.betas.iter().enumerate() {
            let b = b.min(1.0 - 1e-12);
            lp_z += ln_rising(a * b, z.count(k)) + ln_rising(a * (1.0 - b), z.complement(k)) - ln_rising(a, n);
        }
    }

    let c = &state.conc;
    let lp_alpha: f64 = c.alpha.iter().map(|&a| pgm::gamma_ln_pdf(a, c.prior_shape, c.prior_rate)).sum();

    let (lp_params, lp_data) = match &state.params {
        Params::Pgm(p) => {
            (pgm::log_prior(p), (0..data.n_sources()).map(|j| pgm::source_log_likelihood(data, j, p, &state.assign.sources[j])).sum())
        }
        Params::Ggm(p) => {
            (ggm::log_prior(p), (0..data.n_sources()).map(|j| ggm::source_log_likelihood(data, j, p, &state.assign.sources[j])).sum())
        }
    };
    Ok([lp_sticks, lp_z, lp_alpha, lp_params, lp_data])
}
