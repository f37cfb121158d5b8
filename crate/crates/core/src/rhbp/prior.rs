//! Stick-breaking prior pieces: slice variable, stick densities, the marginal
//! probability of an empty column and the probability that every stick past a
//! given one stays empty.

use rand::Rng;

use crate::dist::rng::uniform_pos;
use crate::dist::special::{d_ln_rising, ln_rising};
use crate::dist::{log_sum_exp, StirlingTable};
use crate::error::{invalid, Result};

use super::state::{Assignments, StickState};

/// Stick weight of the active column with the largest index (the smallest
/// active weight); `1.0` when nothing is active.
pub fn beta_star(sticks: &StickState, assign: &Assignments) -> f64 {
    assign.last_active().map_or(1.0, |k| sticks.betas[k])
}

/// `ρ ~ Uniform(0, β*]`.
pub fn sample_slice<R: Rng + ?Sized>(sticks: &mut StickState, assign: &Assignments, rng: &mut R) -> f64 {
    let rho = beta_star(sticks, assign) * uniform_pos(rng);
    sticks.rho = rho;
    rho
}

/// Log-density of `β_(k)` given `β_(k-1) = prev`.
pub fn stick_log_density(beta: f64, prev: f64, tau0: f64) -> f64 {
    if !(beta > 0.0 && beta <= prev) {
        return f64::NEG_INFINITY;
    }
    tau0.ln() - tau0 * prev.ln() + (tau0 - 1.0) * beta.ln()
}

/// Forward draw `β_(k) = prev · v`, `v ~ beta(τ0, 1)`, with its log-density.
pub fn stick_prior_sample<R: Rng + ?Sized>(prev: f64, tau0: f64, rng: &mut R) -> Result<(f64, f64)> {
    if !(tau0 > 0.0) || !(prev > 0.0 && prev <= 1.0) {
        return invalid(format!("stick prior with tau0 {tau0}, prev {prev}"));
    }
    let ln_v = uniform_pos(rng).ln() / tau0;
    let beta = (prev.ln() + ln_v).exp();
    Ok((beta, stick_log_density(beta, prev, tau0)))
}

/// `ln P(column stays empty for all N points | β)` with the source weights
/// `π ~ beta(αβ, α(1-β))` integrated out.
pub fn marginal_inactive_col_log_prob(beta: f64, alpha: f64, n: usize) -> f64 {
    if n == 0 || beta <= 0.0 {
        return 0.0;
    }
    let beta_bar = (1.0 - beta).max(0.0);
    ln_rising(alpha * beta_bar, n) - ln_rising(alpha, n)
}

/// Derivative of [`marginal_inactive_col_log_prob`] in `β`.
pub fn d_marginal_inactive_col_log_prob(beta: f64, alpha: f64, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    -alpha * d_ln_rising(alpha * (1.0 - beta), n)
}

/// Normalized `ω̃_u ∝ c(N, u) α^u`, `u = 0..=N`.
pub fn omega_weights(alpha: f64, n: usize, table: &StirlingTable<f64>) -> Result<Vec<f64>> {
    let lw = table.augmentation_log_weights(n, alpha.ln())?;
    let z = log_sum_exp(&lw);
    Ok(lw.into_iter().map(|w| (w - z).exp()).collect())
}

/// Single-source tail, evaluated term by term:
/// `τ0 Σ_u ω̃_u (T_u(1-β) - H_u)`.
pub fn tail_inactive_log_prob(beta: f64, alpha: f64, n: usize, tau0: f64, table: &StirlingTable<f64>) -> Result<f64> {
    if tau0 == 0.0 || n == 0 {
        return Ok(0.0);
    }
    let omega = omega_weights(alpha, n, table)?;
    let beta_bar = (1.0 - beta).clamp(0.0, 1.0);
    let (mut acc, mut t_minus_h, mut pow) = (0.0, 0.0, 1.0);
    for (u, w) in omega.iter().enumerate().skip(1) {
        pow *= beta_bar;
        t_minus_h += (pow - 1.0) / u as f64;
        acc += w * t_minus_h;
    }
    Ok(tau0 * acc)
}

/// Probability that every stick after one of weight `β` is unused by all
/// sources jointly.
///
/// With `D = Σ_j u_j`, `u_j ~ ω̃^{(j)}` independent, the log-probability is
/// `τ0 E[T_D - H_D] = τ0 Σ_{p≥1} ((1-β)^p - 1)/p · P(D ≥ p)`. For one source
/// this is exactly [`tail_inactive_log_prob`].
#[derive(Clone, Debug)]
pub struct InactiveTail {
    tau0: f64,
    pmf: Vec<f64>,
    /// `survival[p-1] = P(D ≥ p)`.
    survival: Vec<f64>,
}

impl InactiveTail {
    /// `sources` lists `(α_j, N_j)`.
    pub fn new(sources: &[(f64, usize)], tau0: f64, table: &StirlingTable<f64>) -> Result<Self> {
        let mut pmf = vec![1.0];
        for &(alpha, n) in sources {
            if n == 0 {
                continue;
            }
            let w = omega_weights(alpha, n, table)?;
            let mut next = vec![0.0; pmf.len() + w.len() - 1];
            for (a, pa) in pmf.iter().enumerate() {
                if *pa == 0.0 {
                    continue;
                }
                for (b, pb) in w.iter().enumerate() {
                    next[a + b] += pa * pb;
                }
            }
            pmf = next;
        }
        let mut survival = vec![0.0; pmf.len().saturating_sub(1)];
        let mut acc = 0.0;
        for d in (1..pmf.len()).rev() {
            acc += pmf[d];
            survival[d - 1] = acc;
        }
        Ok(Self { tau0, pmf, survival })
    }

    pub fn tau0(&self) -> f64 {
        self.tau0
    }

    pub fn log_prob(&self, beta: f64) -> f64 {
        if self.tau0 == 0.0 {
            return 0.0;
        }
        let ln_y = (-beta.clamp(0.0, 1.0)).ln_1p();
        let s: f64 = self
            .survival
            .iter()
            .enumerate()
            .map(|(i, sp)| {
                let p = (i + 1) as f64;
                (p * ln_y).exp_m1() / p * sp
            })
            .sum();
        self.tau0 * s
    }

    /// `d log_prob / d ln β = -τ0 (1 - E[(1-β)^D])`.
    pub fn d_log_prob_d_ln_beta(&self, beta: f64) -> f64 {
        let y = (1.0 - beta).clamp(0.0, 1.0);
        let mut pow = 1.0;
        let mut e = 0.0;
        for p in &self.pmf {
            e += p * pow;
            pow *= y;
        }
        -self.tau0 * (1.0 - e)
    }
}

/// Sources of an assignment state as `(α_j, N_j)` pairs.
pub fn source_list(alpha: &[f64], assign: &Assignments) -> Vec<(f64, usize)> {
    alpha.iter().zip(&assign.sources).map(|(&a, s)| (a, s.n_points())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::RngStream;

    #[test]
    fn beta_star_examples() {
        let sticks = StickState::new(vec![0.9, 0.4, 0.1], 1.0).unwrap();
        let mut a = Assignments::zeros(&[2], 3);
        assert_eq!(beta_star(&sticks, &a), 1.0);
        a.sources[0].set(0, 1, true);
        assert_eq!(beta_star(&sticks, &a), 0.4);
        a.sources[0].set(1, 0, true);
        a.sources[0].set(1, 2, true);
        assert_eq!(beta_star(&sticks, &a), 0.1);
    }

    #[test]
    fn slice_uniform_below_beta_star() {
        let mut sticks = StickState::new(vec![0.5, 0.2], 1.0).unwrap();
        let mut a = Assignments::zeros(&[1], 2);
        a.sources[0].set(0, 0, true);
        let mut rng = RngStream::new(3, 0);
        let n = 10_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let r = sample_slice(&mut sticks, &a, &mut rng);
            assert!(r > 0.0 && r <= 0.5);
            sum += r;
        }
        let se = 0.5 / 12f64.sqrt() / (n as f64).sqrt();
        assert!((sum / n as f64 - 0.25).abs() < 3.0 * se);
    }

    #[test]
    fn marginal_examples() {
        assert!((marginal_inactive_col_log_prob(0.5, 1.0, 1) - 0.5f64.ln()).abs() < 1e-12);
        assert_eq!(marginal_inactive_col_log_prob(0.0, 2.0, 5), 0.0);
        assert!((marginal_inactive_col_log_prob(0.5, 1.0, 2) - 0.375f64.ln()).abs() < 1e-12);
        assert_eq!(marginal_inactive_col_log_prob(1.0, 1.0, 3), f64::NEG_INFINITY);
    }

    #[test]
    fn marginal_derivative_matches_difference() {
        for &(b, a, n) in &[(0.3, 1.0, 4), (0.7, 0.5, 40), (0.1, 3.0, 100)] {
            let h = 1e-6;
            let fd = (marginal_inactive_col_log_prob(b + h, a, n) - marginal_inactive_col_log_prob(b - h, a, n)) / (2.0 * h);
            assert!((fd - d_marginal_inactive_col_log_prob(b, a, n)).abs() < 1e-5 * fd.abs().max(1.0));
        }
    }

    #[test]
    fn tail_examples() {
        let t = StirlingTable::<f64>::new(10);
        assert!((tail_inactive_log_prob(1.0, 1.0, 1, 1.0, &t).unwrap() + 1.0).abs() < 1e-12);
        assert!((tail_inactive_log_prob(0.5, 1.0, 1, 1.0, &t).unwrap() + 0.5).abs() < 1e-12);
        assert_eq!(tail_inactive_log_prob(0.5, 1.0, 3, 0.0, &t).unwrap(), 0.0);
    }

    #[test]
    fn joint_tail_agrees_with_single_source_form() {
        let t = StirlingTable::<f64>::new(20);
        for &(b, a, n, tau) in &[(0.2, 0.5, 3, 1.0), (0.9, 2.0, 10, 0.5), (0.5, 1.0, 20, 2.0)] {
            let single = tail_inactive_log_prob(b, a, n, tau, &t).unwrap();
            let joint = InactiveTail::new(&[(a, n)], tau, &t).unwrap().log_prob(b);
            assert!((single - joint).abs() < 1e-12 * single.abs().max(1.0));
        }
    }

    #[test]
    fn tail_derivative_matches_difference() {
        let t = StirlingTable::<f64>::new(20);
        let tail = InactiveTail::new(&[(0.7, 5), (2.0, 12)], 1.5, &t).unwrap();
        for &b in &[0.05f64, 0.3, 0.8] {
            let h = 1e-6;
            let fd = (tail.log_prob((b.ln() + h).exp()) - tail.log_prob((b.ln() - h).exp())) / (2.0 * h);
            assert!((fd - tail.d_log_prob_d_ln_beta(b)).abs() < 1e-6);
        }
    }

    #[test]
    fn stick_prior_density_normalized() {
        let (prev, tau) = (0.6, 1.7);
        let n = 400_000;
        let dx = prev / n as f64;
        let total: f64 = (0..n).map(|i| stick_log_density((i as f64 + 0.5) * dx, prev, tau).exp() * dx).sum();
        assert!((total - 1.0).abs() < 1e-4);
    }
}
