//! Numerical self-checks of the sampler: closed forms against brute-force
//! oracles, sampler output against exact distributions, and the
//! joint-distribution test.

use serde::Serialize;
use statrs::distribution::{Beta, ContinuousCDF};

use nhfa::dist::rng::beta as beta_variate;
use nhfa::dist::{ars_sample_auto, ks_one_sample, ArsTarget, RngStream, StirlingTable};
use nhfa::engine::{geweke_check, GewekeConfig, ModelKind};
use nhfa::rhbp::prior::{marginal_inactive_col_log_prob, stick_prior_sample, tail_inactive_log_prob};
use nhfa::rhbp::Mutation;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub group: &'static str,
    pub name: String,
    pub value: f64,
    pub limit: f64,
    /// Pass when `value > limit` rather than `value < limit`.
    pub higher_is_better: bool,
    pub passed: bool,
}

impl Check {
    fn below(group: &'static str, name: String, value: f64, limit: f64) -> Self {
        Self { group, name, value, limit, higher_is_better: false, passed: value < limit }
    }

    /// The least favourable value among `checks`.
    pub fn worst(checks: &[Check]) -> Option<&Check> {
        checks.iter().max_by(|a, b| {
            let key = |c: &Check| if c.higher_is_better { -c.value / c.limit } else { c.value / c.limit };
            key(a).total_cmp(&key(b))
        })
    }

    fn above(group: &'static str, name: String, value: f64, limit: f64) -> Self {
        Self { group, name, value, limit, higher_is_better: true, passed: value > limit }
    }
}

pub const GRID_N: [usize; 3] = [1, 3, 10];
pub const GRID_ALPHA: [f64; 3] = [0.5, 1.0, 2.0];
pub const GRID_BETA: [f64; 3] = [0.2, 0.5, 0.9];
pub const GRID_TAU0: [f64; 2] = [0.5, 1.0];

/// Probability, in a model with `k` i.i.d. atoms of weight
/// `μ ~ beta(τ0/k, 1)`, that every atom lighter than `beta` is unused by a
/// source with `n` points and concentration `alpha`; as `k → ∞` this is the
/// tail probability. Each atom below `beta` contributes
/// `q = ∫_0^1 a t^{a-1} g(βt) dt`, `a = τ0/k`, and the answer is `k ln q`.
pub fn finite_k_tail_log_prob(beta: f64, alpha: f64, n: usize, tau0: f64, k: f64) -> f64 {
    let a = tau0 / k;
    let unused = |t: f64| -(marginal_inactive_col_log_prob(beta * t, alpha, n)).exp_m1();
    let eps = quadrature::double_exponential::integrate(|t| a * t.powf(a - 1.0) * unused(t), 0.0, 1.0, 1e-14 * a).integral;
    k * (-eps).ln_1p()
}

pub fn tail_oracle_checks(k: f64) -> Vec<Check> {
    let table = StirlingTable::<f64>::new(GRID_N[GRID_N.len() - 1]);
    let mut out = Vec::new();
    for n in GRID_N {
        for alpha in GRID_ALPHA {
            for beta in GRID_BETA {
                for tau0 in GRID_TAU0 {
                    let closed = tail_inactive_log_prob(beta, alpha, n, tau0, &table).unwrap_or(f64::NAN);
                    let oracle = finite_k_tail_log_prob(beta, alpha, n, tau0, k);
                    let rel = ((closed - oracle) / oracle).abs();
                    let name = format!("N={n} alpha={alpha} beta={beta} tau0={tau0}");
                    out.push(Check::below("tail", name, if rel.is_nan() { f64::INFINITY } else { rel }, 1e-3));
                }
            }
        }
    }
    out
}

/// Mean and standard error.
fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}

/// Closed-form empty-column probability against simulation over the
/// source weight; the value is the discrepancy in standard errors.
pub fn marginal_mc_checks(samples: usize, seed: u64) -> Vec<Check> {
    let mut out = Vec::new();
    let mut stream = 0;
    for n in GRID_N {
        for alpha in GRID_ALPHA {
            for beta in GRID_BETA {
                let mut rng = RngStream::new(seed, stream);
                stream += 1;
                let draws: Vec<f64> = (0..samples)
                    .map(|_| (1.0 - beta_variate(&mut rng, alpha * beta, alpha * (1.0 - beta)).unwrap_or(f64::NAN)).powi(n as i32))
                    .collect();
                let (m, se) = mean_se(&draws);
                let exact = marginal_inactive_col_log_prob(beta, alpha, n).exp();
                let z = ((m - exact) / se).abs();
                out.push(Check::below(
                    "marginal",
                    format!("N={n} alpha={alpha} beta={beta}"),
                    if z.is_nan() { f64::INFINITY } else { z },
                    4.0,
                ));
            }
        }
    }
    out
}

/// Forward-simulated `E[β_(k)]` against `(τ0/(1+τ0))^k`.
pub fn stick_moment_checks(runs: usize, seed: u64) -> Vec<Check> {
    const DEPTH: usize = 5;
    let mut out = Vec::new();
    for (s, tau0) in [0.5, 1.0, 2.0].into_iter().enumerate() {
        let mut rng = RngStream::new(seed, s as u64);
        let mut draws: Vec<Vec<f64>> = (0..DEPTH).map(|_| Vec::with_capacity(runs)).collect();
        for _ in 0..runs {
            let mut prev = 1.0;
            for d in draws.iter_mut() {
                prev = stick_prior_sample(prev, tau0, &mut rng).map_or(f64::NAN, |b| b.0);
                d.push(prev);
            }
        }
        for (k, d) in draws.iter().enumerate() {
            let (m, se) = mean_se(d);
            let exact = (tau0 / (1.0 + tau0)).powi(k as i32 + 1);
            let z = ((m - exact) / se).abs();
            out.push(Check::below("sticks", format!("tau0={tau0} k={}", k + 1), if z.is_nan() { f64::INFINITY } else { z }, 4.0));
        }
    }
    out
}

type Cdf = Box<dyn Fn(f64) -> f64>;

/// Kolmogorov–Smirnov p-values of adaptive-rejection draws against exact
/// CDFs.
pub fn ars_ks_checks(samples: usize, seed: u64) -> Vec<Check> {
    let beta23 = Beta::new(2.0, 3.0).expect("valid");
    let beta32 = Beta::new(3.0, 2.0).expect("valid");
    let (lo, hi) = (0.3, 0.8);
    let (flo, fhi) = (beta32.cdf(lo), beta32.cdf(hi));
    let cases: Vec<(&str, ArsTarget<'_>, Cdf)> = vec![
        (
            "exp(1)",
            ArsTarget::new(|x| -x, 0.0, f64::INFINITY).expect("support").with_derivative(|_| -1.0),
            Box::new(|x: f64| -(-x.max(0.0)).exp_m1()),
        ),
        (
            "beta(2,3)",
            ArsTarget::new(|x| x.ln() + 2.0 * (-x).ln_1p(), 0.0, 1.0).expect("support").with_derivative(|x| 1.0 / x - 2.0 / (1.0 - x)),
            Box::new(move |x: f64| beta23.cdf(x.clamp(0.0, 1.0))),
        ),
        (
            "beta(3,2) on [0.3,0.8]",
            ArsTarget::new(|x| 2.0 * x.ln() + (-x).ln_1p(), lo, hi).expect("support").with_derivative(|x| 2.0 / x - 1.0 / (1.0 - x)),
            Box::new(move |x: f64| ((beta32.cdf(x.clamp(lo, hi)) - flo) / (fhi - flo)).clamp(0.0, 1.0)),
        ),
    ];
    cases
        .into_iter()
        .enumerate()
        .map(|(s, (name, target, cdf))| {
            let mut rng = RngStream::new(seed, s as u64);
            let xs: Vec<f64> = (0..samples).map(|_| ars_sample_auto(&target, &mut rng).map_or(f64::NAN, |o| o.value)).collect();
            let p = if xs.iter().all(|x| x.is_finite()) { ks_one_sample(&xs, cdf).1 } else { 0.0 };
            Check::above("ars", name.to_string(), p, 0.01)
        })
        .collect()
}

/// Joint-distribution test on the tiny model: one check per tracked
/// statistic and model.
pub fn geweke_checks(samples: usize, seed: u64) -> Vec<Check> {
    let mut out = Vec::new();
    for (s, kind) in [ModelKind::Pgm, ModelKind::Ggm].into_iter().enumerate() {
        match geweke_check(&GewekeConfig::tiny(kind, samples, seed + s as u64)) {
            Ok(stats) => out.extend(stats.into_iter().map(|st| Check::below("geweke", format!("{kind} {}", st.name), st.z.abs(), 4.0))),
            Err(e) => out.push(Check::below("geweke", format!("{kind} failed: {e}"), f64::INFINITY, 4.0)),
        }
    }
    out
}

/// The test must also catch a known bug: reading the Stirling table one
/// index off moves at least one statistic by more than 6 standard errors.
pub fn geweke_power_check(samples: usize, seed: u64) -> Check {
    let mut cfg = GewekeConfig::tiny(ModelKind::Pgm, samples, seed);
    cfg.mutation = Mutation::StirlingOffByOne;
    let max_z = geweke_check(&cfg).map_or(0.0, |stats| stats.iter().map(|s| s.z.abs()).fold(0.0, f64::max));
    Check::above("geweke-power", "pgm stirling off-by-one max |z|".into(), max_z, 6.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finite_k_oracle_reproduces_the_closed_form_examples() {
        // One point, unit concentration: g(β) = 1 - β, so the tail is -τ0 β.
        assert!((finite_k_tail_log_prob(1.0, 1.0, 1, 1.0, 1e5) + 1.0).abs() < 1e-4);
        assert!((finite_k_tail_log_prob(0.5, 1.0, 1, 1.0, 1e5) + 0.5).abs() < 1e-4);
    }

    #[test]
    fn closed_form_tail_matches_the_oracle_grid() {
        let failed: Vec<_> = tail_oracle_checks(1e5).into_iter().filter(|c| !c.passed).collect();
        assert!(failed.is_empty(), "{failed:?}");
    }
}
