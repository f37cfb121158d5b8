//! Column-level birth and death moves for the Poisson-gamma model.
//!
//! Single-entry updates rarely create a factor: a new column used by one
//! data point pays the prior cost of a whole `M`-dimensional factor against
//! that point's likelihood gain alone. A birth here proposes a factor from
//! the unexplained counts of an anchor point and lets every other point join
//! it in the same proposal; a death empties a column in one step.
//!
//! The moves run after compaction, on the target with the slice variable
//! integrated out, so any inactive represented column can be born. The
//! trailing inactive stick is an auxiliary drawn from its exact conditional;
//! a birth on it appends a fresh trailing stick from that same conditional,
//! and a death of the last active column drops the surplus one. Both leave
//! the ratio equal to the column's own prior terms.

use rand::Rng;

use crate::dist::log_sum_exp;
use crate::dist::rng::gamma;
use crate::dist::special::ln_rising;
use crate::dist::StirlingTable;
use crate::error::Result;
use crate::likelihood::pgm::{gamma_ln_pdf, GammaProposal, RowRates};
use crate::likelihood::PgmParams;
use crate::rhbp::prior::source_list;
use crate::rhbp::{compact_state, sample_stick_marginal, Assignments, Concentrations, InactiveTail, StickState};

/// Bounds on the per-point inclusion probability of a proposed birth, so
/// every configuration stays reachable in both directions.
pub(super) const MIN_INCLUDE: f64 = 1e-3;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct BirthDeathReport {
    pub births: usize,
    pub deaths: usize,
}

struct Ctx<'a> {
    sparse: &'a [Vec<Vec<(usize, u64)>>],
    points: Vec<(usize, usize)>,
}

/// `ln P(Z)` terms of one column given its stick.
pub(super) fn column_log_prior(beta: f64, counts: &[usize], conc: &Concentrations, n_points: &[usize]) -> f64 {
    let beta = beta.min(1.0 - 1e-12);
    counts
        .iter()
        .zip(n_points)
        .zip(&conc.alpha)
        .map(|((&n, &total), &a)| ln_rising(a * beta, n) + ln_rising(a * (1.0 - beta), total - n) - ln_rising(a, total))
        .sum()
}

/// Proposal pieces for one point given the factor: weight proposal and
/// inclusion probability.
fn point_proposal(rates: &RowRates<'_>, phi: &[f64], phi_sum: f64, a_w: f64, b_w: f64) -> (GammaProposal, f64) {
    let q = rates.weight_proposal(phi, phi_sum, a_w, b_w);
    let g = rates.gain(phi, phi_sum, q.shape / q.rate);
    let p = (1.0 / (1.0 + (-g).exp())).clamp(MIN_INCLUDE, 1.0 - MIN_INCLUDE);
    (q, p)
}

/// `ln q` of proposing factor `phi` with users `users` (weights `w`) from
/// the state in which the column is empty. `rates` exclude the column.
#[allow(clippy::too_many_arguments)]
fn log_birth_proposal(ctx: &Ctx<'_>, rates: &[Vec<Vec<f64>>], p: &PgmParams, phi: &[f64], on: &[Vec<bool>], w: &[Vec<f64>]) -> f64 {
    let phi_sum: f64 = phi.iter().sum();
    let (a_w, a_phi, b_phi) = (p.hyper.a_w, p.hyper.a_phi, p.hyper.b_phi);
    let mut common = 0.0;
    let mut anchors = Vec::new();
    for &(j, i) in &ctx.points {
        let rr = RowRates { counts: &ctx.sparse[j][i], rates: rates[j][i].clone() };
        let (q, incl) = point_proposal(&rr, phi, phi_sum, a_w, p.hyper.b_w[j]);
        if on[j][i] {
            let wi = w[j][i];
            let ln_inc = incl.ln() + q.ln_pdf(wi);
            common += ln_inc;
            let fq: f64 = rr.factor_proposal(wi, a_phi, b_phi).iter().zip(phi).map(|(g, &x)| g.ln_pdf(x)).sum();
            anchors.push(gamma_ln_pdf(wi, a_w, p.hyper.b_w[j]) + fq - ln_inc);
        } else {
            common += (1.0 - incl).ln();
        }
    }
    common + log_sum_exp(&anchors) - (ctx.points.len() as f64).ln()
}

fn log_target_gain(ctx: &Ctx<'_>, rates: &[Vec<Vec<f64>>], p: &PgmParams, phi: &[f64], on: &[Vec<bool>], w: &[Vec<f64>]) -> f64 {
    let phi_sum: f64 = phi.iter().sum();
    let mut total: f64 = phi.iter().map(|&x| gamma_ln_pdf(x, p.hyper.a_phi, p.hyper.b_phi)).sum();
    for &(j, i) in &ctx.points {
        if on[j][i] {
            let rr = RowRates { counts: &ctx.sparse[j][i], rates: rates[j][i].clone() };
            total += gamma_ln_pdf(w[j][i], p.hyper.a_w, p.hyper.b_w[j]) + rr.gain(phi, phi_sum, w[j][i]);
        }
    }
    total
}

/// Runs `attempts` moves, each a birth or a death with equal probability.
#[allow(clippy::too_many_arguments)]
pub fn pgm_birth_death<R: Rng + ?Sized>(
    sparse: &[Vec<Vec<(usize, u64)>>],
    n_points: &[usize],
    sticks: &mut StickState,
    assign: &mut Assignments,
    conc: &Concentrations,
    p: &mut PgmParams,
    table: &StirlingTable<f64>,
    attempts: usize,
    rng: &mut R,
) -> Result<BirthDeathReport> {
    let n_features = p.phi.first().map_or(0, Vec::len);
    let sources = source_list(&conc.alpha, assign);
    let tail = InactiveTail::new(&sources, sticks.tau0, table)?;
    let points: Vec<(usize, usize)> = n_points.iter().enumerate().flat_map(|(j, &n)| (0..n).map(move |i| (j, i))).collect();
    let ctx = Ctx { sparse, points };
    let mut report = BirthDeathReport::default();
    if ctx.points.is_empty() {
        return Ok(report);
    }
    let mut rates: Vec<Vec<Vec<f64>>> =
        (0..n_points.len()).map(|j| (0..n_points[j]).map(|i| p.rates(j, i, &assign.sources[j])).collect()).collect();

    for _ in 0..attempts {
        let kd = sticks.k_dagger();
        let empty: Vec<usize> = (0..kd).filter(|&c| !assign.is_active(c)).collect();
        let active: Vec<usize> = (0..kd).filter(|&c| assign.is_active(c)).collect();
        let birth = rng.random::<bool>();

        if birth {
            if empty.is_empty() {
                continue;
            }
            let c = empty[rng.random_range(0..empty.len())];
            let (ja, ia) = ctx.points[rng.random_range(0..ctx.points.len())];
            let wa = gamma(rng, p.hyper.a_w, p.hyper.b_w[ja])?.max(f64::MIN_POSITIVE);
            let anchor = RowRates { counts: &sparse[ja][ia], rates: rates[ja][ia].clone() };
            let phi =
                anchor.factor_proposal(wa, p.hyper.a_phi, p.hyper.b_phi).iter().map(|g| g.sample(rng)).collect::<Result<Vec<f64>>>()?;
            let phi_sum: f64 = phi.iter().sum();
            let mut on: Vec<Vec<bool>> = n_points.iter().map(|&n| vec![false; n]).collect();
            let mut w: Vec<Vec<f64>> = n_points.iter().map(|&n| vec![0.0; n]).collect();
            on[ja][ia] = true;
            w[ja][ia] = wa;
            for &(j, i) in &ctx.points {
                if (j, i) == (ja, ia) {
                    continue;
                }
                let rr = RowRates { counts: &sparse[j][i], rates: rates[j][i].clone() };
                let (q, incl) = point_proposal(&rr, &phi, phi_sum, p.hyper.a_w, p.hyper.b_w[j]);
                if rng.random::<f64>() < incl {
                    on[j][i] = true;
                    w[j][i] = q.sample(rng)?;
                }
            }
            let counts: Vec<usize> = on.iter().map(|s| s.iter().filter(|&&b| b).count()).collect();
            let zeros = vec![0; n_points.len()];
            let beta = sticks.betas[c];
            let prior = column_log_prior(beta, &counts, conc, n_points) - column_log_prior(beta, &zeros, conc, n_points);
            let target = prior + log_target_gain(&ctx, &rates, p, &phi, &on, &w);
            let ln_fwd = -(empty.len() as f64).ln() + log_birth_proposal(&ctx, &rates, p, &phi, &on, &w);
            let ln_rev = -((active.len() + 1) as f64).ln();
            let log_a = target + ln_rev - ln_fwd;
            if log_a >= 0.0 || rng.random::<f64>().ln() < log_a {
                for &(j, i) in &ctx.points {
                    if on[j][i] {
                        assign.sources[j].set(i, c, true);
                        p.w[j][c][i] = w[j][i];
                        for (r, f) in rates[j][i].iter_mut().zip(&phi) {
                            *r += w[j][i] * f;
                        }
                    }
                }
                p.phi[c] = phi;
                if c + 1 == kd {
                    let draw = sample_stick_marginal(beta, &sources, &tail, rng)?;
                    sticks.betas.push(draw.value);
                    assign.push_zero_column();
                    p.push_prior_column(n_features, n_points, rng)?;
                }
                report.births += 1;
            }
        } else {
            if active.is_empty() {
                continue;
            }
            let c = active[rng.random_range(0..active.len())];
            let phi = p.phi[c].clone();
            let mut on: Vec<Vec<bool>> = n_points.iter().map(|&n| vec![false; n]).collect();
            let mut w: Vec<Vec<f64>> = n_points.iter().map(|&n| vec![0.0; n]).collect();
            let mut without = rates.clone();
            for &(j, i) in &ctx.points {
                if assign.sources[j].get(i, c) {
                    on[j][i] = true;
                    w[j][i] = p.w[j][c][i];
                    let floor = p.lambda[j];
                    for (r, f) in without[j][i].iter_mut().zip(&phi) {
                        *r = (*r - w[j][i] * f).max(floor);
                    }
                }
            }
            let counts: Vec<usize> = (0..n_points.len()).map(|j| assign.sources[j].count(c)).collect();
            let zeros = vec![0; n_points.len()];
            let beta = sticks.betas[c];
            let prior = column_log_prior(beta, &counts, conc, n_points) - column_log_prior(beta, &zeros, conc, n_points);
            // Killing the last active column drops the trailing stick. Only
            // allowed when exactly one stick goes, which a birth on the new
            // trailing stick reverses.
            let is_last = active.last() == Some(&c);
            if is_last && c > 0 && !assign.is_active(c - 1) {
                continue;
            }
            let empty_after = if is_last { empty.len() } else { empty.len() + 1 };
            let target = prior + log_target_gain(&ctx, &without, p, &phi, &on, &w);
            let ln_birth = -(empty_after as f64).ln() + log_birth_proposal(&ctx, &without, p, &phi, &on, &w);
            let ln_death = -(active.len() as f64).ln();
            let log_a = -target + ln_birth - ln_death;
            if log_a >= 0.0 || rng.random::<f64>().ln() < log_a {
                for &(j, i) in &ctx.points {
                    if on[j][i] {
                        assign.sources[j].set(i, c, false);
                        p.w[j][c][i] = gamma(rng, p.hyper.a_w, p.hyper.b_w[j])?.max(f64::MIN_POSITIVE);
                    }
                }
                p.phi[c] = (0..phi.len()).map(|_| gamma(rng, p.hyper.a_phi, p.hyper.b_phi)).collect::<Result<_>>()?;
                rates = without;
                let keep = compact_state(sticks, assign)?;
                p.truncate(keep);
                report.deaths += 1;
            }
        }
    }
    Ok(report)
}
