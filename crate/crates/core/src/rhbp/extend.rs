//! Growing the represented sticks until the last one falls below the slice.

use rand::Rng;

use crate::dist::special::ln_rising;
use crate::dist::{ars_sample_auto, sample_discrete_log, ArsTarget, StirlingTable};
use crate::error::{invalid, Error, Result};

use super::prior::{d_marginal_inactive_col_log_prob, source_list, InactiveTail};
use super::state::{Assignments, AuxState, Concentrations, StickState};

pub const MAX_NEW_STICKS: usize = 10_000;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StickDraw {
    pub value: f64,
    /// ARS hit floating-point non-concavity and used its fallback.
    pub fallback: bool,
    /// The support collapsed below machine precision; `value` is the bound.
    pub truncated: bool,
}

/// `v ∈ {1..N}` with weights `c(N, v) (α(1-β))^v`; `0` when `N = 0`.
pub fn sample_v<R: Rng + ?Sized>(alpha: f64, beta: f64, n: usize, table: &StirlingTable<f64>, rng: &mut R) -> Result<usize> {
    if n == 0 {
        return Ok(0);
    }
    let x = alpha * (1.0 - beta).max(1e-12);
    let lw = table.augmentation_log_weights(n, x.ln())?;
    sample_discrete_log(&lw, rng)
}

fn degenerate(prev: f64) -> Option<StickDraw> {
    (prev <= f64::EPSILON).then_some(StickDraw { value: prev, fallback: false, truncated: true })
}

/// Draws a stick on `(0, prev]` from `β^{τ0-1} (1-β)^{Σv} · tail(β)`.
///
/// The density is log-concave in `ln β`, so ARS runs on that scale (the
/// Jacobian adds one to the power of `β`).
pub fn sample_new_stick<R: Rng + ?Sized>(prev: f64, v: &[usize], tail: &InactiveTail, rng: &mut R) -> Result<StickDraw> {
    if !(prev > 0.0 && prev <= 1.0) {
        return invalid(format!("new stick below {prev}"));
    }
    if let Some(d) = degenerate(prev) {
        return Ok(d);
    }
    let tau0 = tail.tau0();
    if !(tau0 > 0.0) {
        return invalid("new sticks need tau0 > 0");
    }
    let vs = v.iter().sum::<usize>() as f64;
    let h = |y: f64| {
        let b = y.exp();
        let pow = if vs == 0.0 { 0.0 } else { vs * (-b).ln_1p() };
        tau0 * y + pow + tail.log_prob(b)
    };
    let dh = |y: f64| {
        let b = y.exp();
        tau0 - vs * b / (1.0 - b) + tail.d_log_prob_d_ln_beta(b)
    };
    draw_log_scale(h, dh, prev, rng)
}

/// Draws a fresh stick with every source's column marginalized:
/// `β^{τ0-1} Π_j g_j(β) · tail(β)` on `(0, prev]`, where `g_j` is the
/// probability that source `j` leaves the column empty.
pub fn sample_stick_marginal<R: Rng + ?Sized>(prev: f64, sources: &[(f64, usize)], tail: &InactiveTail, rng: &mut R) -> Result<StickDraw> {
    if let Some(d) = degenerate(prev) {
        return Ok(d);
    }
    let tau0 = tail.tau0();
    if !(tau0 > 0.0) {
        return invalid("new sticks need tau0 > 0");
    }
    let h = |y: f64| {
        let b = y.exp();
        let g: f64 = sources.iter().map(|&(a, n)| ln_rising(a * (1.0 - b), n) - ln_rising(a, n)).sum();
        tau0 * y + g + tail.log_prob(b)
    };
    let dh = |y: f64| {
        let b = y.exp();
        let g: f64 = sources.iter().map(|&(a, n)| d_marginal_inactive_col_log_prob(b, a, n)).sum();
        tau0 + b * g + tail.d_log_prob_d_ln_beta(b)
    };
    draw_log_scale(h, dh, prev, rng)
}

fn draw_log_scale<R: Rng + ?Sized>(h: impl Fn(f64) -> f64, dh: impl Fn(f64) -> f64, prev: f64, rng: &mut R) -> Result<StickDraw> {
    let target = ArsTarget::new(h, f64::NEG_INFINITY, prev.ln())?.with_derivative(dh);
    let out = ars_sample_auto(&target, rng)?;
    let value = out.value.exp().clamp(f64::MIN_POSITIVE, prev);
    Ok(StickDraw { value, fallback: out.fallback, truncated: false })
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ExtensionReport {
    pub new_sticks: usize,
    pub ars_fallbacks: usize,
}

/// Appends sticks (and zero columns) until the last stick is below `ρ`.
///
/// Each new stick is drawn from its column-marginal conditional, then the
/// `v` auxiliaries are drawn given it and the stick is refreshed given `v`.
/// The caller is responsible for appending matching parameter columns.
pub fn extend_representation<R: Rng + ?Sized>(
    sticks: &mut StickState,
    assign: &mut Assignments,
    conc: &Concentrations,
    aux: &mut AuxState,
    table: &StirlingTable<f64>,
    rng: &mut R,
) -> Result<ExtensionReport> {
    let mut report = ExtensionReport::default();
    aux.v.clear();
    if *sticks.betas.last().expect("nonempty sticks") < sticks.rho {
        return Ok(report);
    }
    let sources = source_list(&conc.alpha, assign);
    let tail = InactiveTail::new(&sources, sticks.tau0, table)?;
    while *sticks.betas.last().expect("nonempty sticks") >= sticks.rho {
        if report.new_sticks >= MAX_NEW_STICKS {
            return Err(Error::RunawayExtension(report.new_sticks));
        }
        let prev = *sticks.betas.last().unwrap();
        let first = sample_stick_marginal(prev, &sources, &tail, rng)?;
        let v = sources.iter().map(|&(a, n)| sample_v(a, first.value, n, table, rng)).collect::<Result<Vec<_>>>()?;
        let draw = sample_new_stick(prev, &v, &tail, rng)?;
        report.ars_fallbacks += usize::from(first.fallback) + usize::from(draw.fallback);
        sticks.betas.push(draw.value);
        assign.push_zero_column();
        aux.v.push(v);
        report.new_sticks += 1;
    }
    Ok(report)
}
