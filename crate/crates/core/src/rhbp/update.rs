//! Gibbs updates of the assignments, the Stirling auxiliaries, the
//! represented sticks and the concentrations; plus compaction.

use rand::Rng;

use crate::dist::rng::{gamma, ln_beta_variate, uniform_pos};
use crate::dist::{sample_discrete_log, sample_truncated_beta, StirlingTable};
use crate::error::{Error, Result};

use super::extend::{sample_new_stick, StickDraw};
use super::prior::{source_list, InactiveTail};
use super::state::{Assignments, AuxState, Concentrations, StickState};

/// Guard against the `Γ(0)` pole at `β = 1`.
const MAX_BETA: f64 = 1.0 - 1e-12;

/// Deliberate sampler corruptions used to show the joint-distribution test
/// has power. Never enabled in real runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Mutation {
    #[default]
    None,
    /// Reads the Stirling row one index too far when drawing `m` and `l`.
    StirlingOffByOne,
}

/// Largest active index when entry `(j, i, k)` is ignored.
fn last_active_without(assign: &Assignments, j: usize, i: usize, k: usize) -> Option<usize> {
    let own = usize::from(assign.sources[j].get(i, k));
    (0..assign.n_cols()).rev().find(|&c| {
        let total = assign.total_count(c);
        if c == k {
            total > own
        } else {
            total > 0
        }
    })
}

/// Log prior odds `ln P(z=1) - ln P(z=0)` for entry `(j, i, k)` with the
/// source weight integrated out and the slice density `1/β*` included under
/// each hypothesis.
pub fn z_prior_log_odds(j: usize, i: usize, k: usize, sticks: &StickState, assign: &Assignments, alpha: f64) -> f64 {
    let z = &assign.sources[j];
    let n_minus = (z.count(k) - usize::from(z.get(i, k))) as f64;
    let n = z.n_points() as f64;
    let beta = sticks.betas[k].min(MAX_BETA);
    let others = last_active_without(assign, j, i, k);
    let star = |idx: Option<usize>| idx.map_or(1.0, |c| sticks.betas[c]);
    let star1 = star(Some(others.map_or(k, |o| o.max(k))));
    let star0 = star(others);
    let w1 = (n_minus + alpha * beta).ln() - star1.ln();
    let w0 = (n - 1.0 - n_minus + alpha * (1.0 - beta)).ln() - star0.ln();
    w1 - w0
}

/// Resamples `Z_j[i, k]` given the log likelihood ratio `ln L1 - ln L0` of
/// the data point under the two values. Columns below the slice stay zero.
pub fn sample_z_entry<R: Rng + ?Sized>(
    j: usize,
    i: usize,
    k: usize,
    sticks: &StickState,
    assign: &mut Assignments,
    conc: &Concentrations,
    log_lik_ratio: f64,
    rng: &mut R,
) -> Result<bool> {
    if sticks.betas[k] < sticks.rho {
        assign.sources[j].set(i, k, false);
        return Ok(false);
    }
    let odds = z_prior_log_odds(j, i, k, sticks, assign, conc.alpha[j]) + log_lik_ratio;
    if odds.is_nan() {
        return Err(Error::Degenerate(format!("Z odds undefined at ({j}, {i}, {k})")));
    }
    let p1 = if odds >= 0.0 { 1.0 / (1.0 + (-odds).exp()) } else { odds.exp() / (1.0 + odds.exp()) };
    let z = rng.random::<f64>() < p1;
    assign.sources[j].set(i, k, z);
    Ok(z)
}

fn sample_crp_tables<R: Rng + ?Sized>(n: usize, x: f64, table: &StirlingTable<f64>, rng: &mut R, off_by_one: bool) -> Result<usize> {
    if n == 0 {
        return Ok(0);
    }
    let ln_x = x.ln();
    let lw: Vec<f64> = if off_by_one {
        (0..=n)
            .map(|m| {
                if n < table.max_n() {
                    table.log_stirling1(n + 1, m).map(|c| c + m as f64 * ln_x)
                } else {
                    table.log_stirling1(n, m).map(|c| c + m as f64 * ln_x)
                }
            })
            .collect::<Result<_>>()?
    } else {
        table.augmentation_log_weights(n, ln_x)?
    };
    sample_discrete_log(&lw, rng)
}

/// `m ∈ {0..n}` with weights `c(n, m) (αβ)^m`.
pub fn sample_m<R: Rng + ?Sized>(n: usize, alpha: f64, beta: f64, table: &StirlingTable<f64>, rng: &mut R) -> Result<usize> {
    sample_crp_tables(n, alpha * beta, table, rng, false)
}

/// `l ∈ {0..n̄}` with weights `c(n̄, l) (α(1-β))^l`.
pub fn sample_l<R: Rng + ?Sized>(nbar: usize, alpha: f64, beta: f64, table: &StirlingTable<f64>, rng: &mut R) -> Result<usize> {
    sample_crp_tables(nbar, alpha * (1.0 - beta.min(MAX_BETA)), table, rng, false)
}

/// Draws `m[j][k]` and `l[j][k]` for every source and represented column.
pub fn sample_ml<R: Rng + ?Sized>(
    sticks: &StickState,
    assign: &Assignments,
    conc: &Concentrations,
    aux: &mut AuxState,
    table: &StirlingTable<f64>,
    mutation: Mutation,
    rng: &mut R,
) -> Result<()> {
    aux.m.clear();
    aux.l.clear();
    for (j, z) in assign.sources.iter().enumerate() {
        let a = conc.alpha[j];
        let mut m_row = Vec::with_capacity(z.n_cols());
        let mut l_row = Vec::with_capacity(z.n_cols());
        for (k, &beta) in sticks.betas.iter().enumerate() {
            let off = mutation == Mutation::StirlingOffByOne;
            m_row.push(sample_crp_tables(z.count(k), a * beta, table, rng, off)?);
            l_row.push(sample_crp_tables(z.complement(k), a * (1.0 - beta.min(MAX_BETA)), table, rng, off)?);
        }
        aux.m.push(m_row);
        aux.l.push(l_row);
    }
    Ok(())
}

/// Resamples stick `k` given the auxiliary sums.
///
/// Sticks before the last are truncated `beta(m_k, l_k + 1)` between their
/// neighbours. The last stick also carries the probability that everything
/// beyond it stays empty, so it is drawn like a new stick with `v = l_k`.
pub fn sample_beta_active<R: Rng + ?Sized>(
    k: usize,
    sticks: &mut StickState,
    m_sum: usize,
    l_sum: usize,
    tail: &InactiveTail,
    rng: &mut R,
) -> Result<StickDraw> {
    let hi = sticks.upper_bound(k);
    let last = k + 1 == sticks.k_dagger();
    let draw = if last {
        sample_new_stick(hi, &[l_sum], tail, rng)?
    } else {
        let lo = sticks.betas[k + 1];
        if hi - lo <= 1e-15 * hi {
            return Ok(StickDraw { value: sticks.betas[k], fallback: false, truncated: true });
        }
        let v = sample_truncated_beta(m_sum as f64, l_sum as f64 + 1.0, lo, hi, rng)?;
        StickDraw { value: v, fallback: false, truncated: false }
    };
    if !draw.truncated {
        sticks.betas[k] = draw.value;
    }
    Ok(draw)
}

/// Sweeps `k = 1..K†` through [`sample_beta_active`].
pub fn sample_sticks<R: Rng + ?Sized>(
    sticks: &mut StickState,
    assign: &Assignments,
    conc: &Concentrations,
    aux: &AuxState,
    table: &StirlingTable<f64>,
    rng: &mut R,
) -> Result<usize> {
    let tail = InactiveTail::new(&source_list(&conc.alpha, assign), sticks.tau0, table)?;
    let m = aux.m_sums();
    let l = aux.l_sums();
    let mut fallbacks = 0;
    for k in 0..sticks.k_dagger() {
        let d = sample_beta_active(k, sticks, m[k], l[k], &tail, rng)?;
        fallbacks += usize::from(d.fallback);
    }
    Ok(fallbacks)
}

/// Conjugate part of the concentration update for source `j`: with
/// `w_k ~ beta(α, N)` per represented column,
/// `α ~ gamma(a + Σ(m + l), b - Σ ln w)`. Returns the proposal and the `w`.
pub fn sample_alpha<R: Rng + ?Sized>(
    alpha: f64,
    m_row: &[usize],
    l_row: &[usize],
    n: usize,
    prior: (f64, f64),
    rng: &mut R,
) -> Result<(f64, Vec<f64>)> {
    if n == 0 {
        return Ok((gamma(rng, prior.0, prior.1)?, Vec::new()));
    }
    let mut sum_ln_w = 0.0;
    let mut ws = Vec::with_capacity(m_row.len());
    for _ in 0..m_row.len() {
        let (ln_w, _) = ln_beta_variate(rng, alpha, n as f64)?;
        sum_ln_w += ln_w;
        ws.push(ln_w.exp());
    }
    let counts: usize = m_row.iter().chain(l_row).sum();
    let a = gamma(rng, prior.0 + counts as f64, prior.1 - sum_ln_w)?;
    Ok((a.max(1e-300), ws))
}

/// Updates every `α_j`. Because the probability of an empty tail past the
/// last stick also depends on `α_j`, the conjugate draw is accepted with
/// probability `tail(α')/tail(α)` unless `tail_correction` is off (frozen
/// sticks with no tail).
pub fn sample_concentrations<R: Rng + ?Sized>(
    sticks: &StickState,
    assign: &Assignments,
    conc: &mut Concentrations,
    aux: &mut AuxState,
    table: &StirlingTable<f64>,
    tail_correction: bool,
    rng: &mut R,
) -> Result<usize> {
    let last = *sticks.betas.last().expect("nonempty sticks");
    let mut accepted = 0;
    aux.w.clear();
    for j in 0..conc.alpha.len() {
        let n = assign.sources[j].n_points();
        let (proposal, w) = sample_alpha(conc.alpha[j], &aux.m[j], &aux.l[j], n, (conc.prior_shape, conc.prior_rate), rng)?;
        aux.w.push(w);
        let accept = if tail_correction && n > 0 && sticks.tau0 > 0.0 {
            let current = InactiveTail::new(&source_list(&conc.alpha, assign), sticks.tau0, table)?.log_prob(last);
            let mut alt = conc.alpha.clone();
            alt[j] = proposal;
            let next = InactiveTail::new(&source_list(&alt, assign), sticks.tau0, table)?.log_prob(last);
            uniform_pos(rng).ln() <= next - current
        } else {
            true
        };
        if accept {
            conc.alpha[j] = proposal;
            accepted += 1;
        }
    }
    Ok(accepted)
}

/// Drops every column past the first inactive one after the last active
/// column. With nothing active the first stick is kept. Returns the new `K†`.
pub fn compact_state(sticks: &mut StickState, assign: &mut Assignments) -> Result<usize> {
    let keep = match assign.last_active() {
        None => 1,
        Some(k) if k + 1 < sticks.k_dagger() => k + 2,
        Some(k) => return Err(Error::StateCorruption(format!("column {k} is active but no inactive stick follows it"))),
    };
    sticks.betas.truncate(keep);
    assign.truncate(keep);
    Ok(keep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::RngStream;

    #[test]
    fn m_examples() {
        let t = StirlingTable::new(5);
        let mut rng = RngStream::new(1, 0);
        assert_eq!(sample_m(0, 1.0, 0.5, &t, &mut rng).unwrap(), 0);
        assert!((0..100).all(|_| sample_m(1, 1.0, 0.5, &t, &mut rng).unwrap() == 1));
        let n = 20_000;
        let ones = (0..n).filter(|_| sample_m(2, 2.0, 0.5, &t, &mut rng).unwrap() == 1).count();
        assert!((ones as f64 / n as f64 - 0.5).abs() < 3.0 * (0.25 / n as f64).sqrt());
    }

    #[test]
    fn z_prior_enumeration() {
        // n^{-i}=2 of N=5, α=1, β=0.5: odds 2.5 : 2.5
        let sticks = StickState::new(vec![0.9, 0.5, 0.1], 1.0).unwrap();
        let mut a = Assignments::zeros(&[5], 3);
        a.sources[0].set(1, 1, true);
        a.sources[0].set(2, 1, true);
        a.sources[0].set(3, 0, true);
        let odds = z_prior_log_odds(0, 0, 1, &sticks, &a, 1.0);
        assert!(odds.abs() < 1e-12);
    }

    #[test]
    fn z_prior_sees_beta_star_shift() {
        // entry is the only user of the smallest active stick
        let sticks = StickState::new(vec![0.9, 0.5, 0.1], 1.0).unwrap();
        let mut a = Assignments::zeros(&[2], 3);
        a.sources[0].set(0, 0, true);
        a.sources[0].set(0, 1, true);
        let odds = z_prior_log_odds(0, 0, 1, &sticks, &a, 1.0);
        let expected = -(1.5f64.ln() - 0.9f64.ln());
        assert!((odds - expected).abs() < 1e-12);
    }

    #[test]
    fn impossible_likelihood_forces_zero() {
        let mut sticks = StickState::new(vec![0.9, 0.1], 1.0).unwrap();
        sticks.rho = 0.05;
        let mut a = Assignments::zeros(&[3], 2);
        let conc = Concentrations::new(vec![1.0], 1.0, 1.0).unwrap();
        let mut rng = RngStream::new(2, 0);
        for _ in 0..50 {
            assert!(!sample_z_entry(0, 0, 0, &sticks, &mut a, &conc, f64::NEG_INFINITY, &mut rng).unwrap());
        }
    }

    #[test]
    fn below_slice_stays_zero() {
        let mut sticks = StickState::new(vec![0.9, 0.1], 1.0).unwrap();
        sticks.rho = 0.2;
        let mut a = Assignments::zeros(&[3], 2);
        let conc = Concentrations::new(vec![1.0], 1.0, 1.0).unwrap();
        let mut rng = RngStream::new(2, 0);
        for _ in 0..50 {
            assert!(!sample_z_entry(0, 0, 1, &sticks, &mut a, &conc, 50.0, &mut rng).unwrap());
        }
    }

    #[test]
    fn alpha_prior_recovery_and_arithmetic() {
        let mut rng = RngStream::new(3, 0);
        let n = 20_000;
        let mean = (0..n).map(|_| sample_alpha(1.0, &[], &[], 5, (1.0, 1.0), &mut rng).unwrap().0).sum::<f64>() / n as f64;
        assert!((mean - 1.0).abs() < 3.0 / (n as f64).sqrt());
    }

    #[test]
    fn compaction_examples() {
        let mut sticks = StickState::new(vec![0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3], 1.0).unwrap();
        let mut a = Assignments::zeros(&[2], 7);
        for k in [0, 1, 4] {
            a.sources[0].set(0, k, true);
        }
        assert_eq!(compact_state(&mut sticks, &mut a).unwrap(), 6);
        assert_eq!(a.n_cols(), 6);
        let mut sticks = StickState::new(vec![0.9, 0.8], 1.0).unwrap();
        let mut a = Assignments::zeros(&[2], 2);
        assert_eq!(compact_state(&mut sticks, &mut a).unwrap(), 1);
        assert_eq!(sticks.betas, vec![0.9]);
    }

    #[test]
    fn truncated_update_keeps_order() {
        let t = StirlingTable::new(4);
        let tail = InactiveTail::new(&[(1.0, 4)], 1.0, &t).unwrap();
        let mut sticks = StickState::new(vec![0.9, 0.5, 0.2, 0.05], 1.0).unwrap();
        let mut rng = RngStream::new(4, 0);
        for _ in 0..200 {
            for k in 0..4 {
                sample_beta_active(k, &mut sticks, 2, 1, &tail, &mut rng).unwrap();
                sticks.validate().unwrap();
            }
        }
    }
}
