//! Poisson-gamma factor model: `X_j[:, i] ~ Poisson(Φ (z_i ⊙ w_i) + λ_j)`
//! with gamma priors (shape/rate) on every entry of `Φ`, `W_j` and on `λ_j`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::SourceDataset;
use crate::dist::rng::{gamma, multinomial_into};
use crate::dist::special::ln_factorial;
use crate::error::{Error, Result};
use crate::rhbp::{Assignments, SourceAssignments};

const MIN_LAMBDA: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PgmHyper {
    pub a_phi: f64,
    pub b_phi: f64,
    pub a_w: f64,
    /// Per-source rate of the weight prior.
    pub b_w: Vec<f64>,
    pub a_lambda: f64,
    pub b_lambda: f64,
    /// Resample `b_phi`, `b_w` from `gamma(1, rate = grand mean)` each sweep.
    pub resample_scales: bool,
}

impl PgmHyper {
    pub fn new(n_sources: usize) -> Self {
        Self { a_phi: 1.0, b_phi: 1.0, a_w: 1.0, b_w: vec![1.0; n_sources], a_lambda: 1.0, b_lambda: 1.0, resample_scales: true }
    }
}

/// `phi[k][m]`, `w[j][k][i]`, `lambda[j]`.
#[derive(Clone, Debug, PartialEq)]
pub struct PgmParams {
    pub phi: Vec<Vec<f64>>,
    pub w: Vec<Vec<Vec<f64>>>,
    pub lambda: Vec<f64>,
    pub hyper: PgmHyper,
}

impl PgmParams {
    pub fn from_prior<R: Rng + ?Sized>(n_features: usize, n_points: &[usize], n_cols: usize, hyper: PgmHyper, rng: &mut R) -> Result<Self> {
        let mut p = Self { phi: Vec::new(), w: vec![Vec::new(); n_points.len()], lambda: Vec::with_capacity(n_points.len()), hyper };
        for _ in 0..n_points.len() {
            p.lambda.push(gamma(rng, p.hyper.a_lambda, p.hyper.b_lambda)?.max(MIN_LAMBDA));
        }
        for _ in 0..n_cols {
            p.push_prior_column(n_features, n_points, rng)?;
        }
        Ok(p)
    }

    pub fn n_cols(&self) -> usize {
        self.phi.len()
    }

    pub fn push_prior_column<R: Rng + ?Sized>(&mut self, n_features: usize, n_points: &[usize], rng: &mut R) -> Result<()> {
        let col = (0..n_features).map(|_| gamma(rng, self.hyper.a_phi, self.hyper.b_phi)).collect::<Result<Vec<_>>>()?;
        self.phi.push(col);
        for (j, &n) in n_points.iter().enumerate() {
            let b = self.hyper.b_w[j];
            let col = (0..n).map(|_| gamma(rng, self.hyper.a_w, b)).collect::<Result<Vec<_>>>()?;
            self.w[j].push(col);
        }
        Ok(())
    }

    pub fn truncate(&mut self, n_cols: usize) {
        self.phi.truncate(n_cols);
        for w in &mut self.w {
            w.truncate(n_cols);
        }
    }

    /// Poisson rates of data point `i` of source `j`.
    pub fn rates(&self, j: usize, i: usize, z: &SourceAssignments) -> Vec<f64> {
        let m = self.phi.first().map_or(0, Vec::len);
        let mut mu = vec![self.lambda[j]; m];
        for (k, phi_k) in self.phi.iter().enumerate() {
            if z.get(i, k) {
                let w = self.w[j][k][i];
                for (r, p) in mu.iter_mut().zip(phi_k) {
                    *r += w * p;
                }
            }
        }
        mu
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |x: &f64| !(*x > 0.0 && x.is_finite());
        if self.phi.iter().flatten().any(bad) || self.w.iter().flatten().flatten().any(bad) || self.lambda.iter().any(bad) {
            return Err(Error::StateCorruption("non-positive Poisson-gamma parameter".into()));
        }
        Ok(())
    }
}

/// `Σ_m [x_m ln μ_m - μ_m - ln x_m!]`.
pub fn row_log_likelihood(x: &[f64], phi: &[Vec<f64>], z_row: &[bool], w_row: &[f64], lambda: f64) -> f64 {
    let mut total = 0.0;
    for (m, &xm) in x.iter().enumerate() {
        let mut mu = lambda;
        for (k, phi_k) in phi.iter().enumerate() {
            if z_row[k] {
                mu += phi_k[m] * w_row[k];
            }
        }
        total += poisson_ln_pmf(xm, mu);
    }
    total
}

pub fn poisson_ln_pmf(x: f64, mu: f64) -> f64 {
    if x == 0.0 {
        return -mu;
    }
    if mu <= 0.0 {
        return f64::NEG_INFINITY;
    }
    x * mu.ln() - mu - ln_factorial(x)
}

/// Log-likelihood of a whole source.
pub fn source_log_likelihood(data: &SourceDataset, j: usize, params: &PgmParams, z: &SourceAssignments) -> f64 {
    let x = data.matrix(j);
    (0..x.cols())
        .map(|i| {
            let mu = params.rates(j, i, z);
            x.column(i).iter().zip(&mu).map(|(&xm, &m)| poisson_ln_pmf(xm, m)).sum::<f64>()
        })
        .sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Cell {
    pub source: usize,
    pub point: usize,
    pub row: usize,
    pub count: u64,
}

/// Split of every nonzero count into per-factor parts plus a noise part,
/// stored as one row of `K† + 1` integers per cell.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CountDecomposition {
    pub n_cols: usize,
    pub cells: Vec<Cell>,
    pub parts: Vec<u64>,
}

impl CountDecomposition {
    pub fn parts_of(&self, c: usize) -> &[u64] {
        let w = self.n_cols + 1;
        &self.parts[c * w..(c + 1) * w]
    }

    /// Every cell's parts sum to its count.
    pub fn verify(&self) -> Result<()> {
        for (c, cell) in self.cells.iter().enumerate() {
            let s: u64 = self.parts_of(c).iter().sum();
            if s != cell.count {
                return Err(Error::StateCorruption(format!("decomposition of cell {:?} sums to {s}", cell)));
            }
        }
        Ok(())
    }
}

/// Sufficient statistics of a decomposition.
#[derive(Clone, Debug, PartialEq)]
pub struct DecompositionSums {
    /// `s[k][m]`: parts assigned to factor `k` on feature `m`.
    pub s: Vec<Vec<f64>>,
    /// `t[j][k][i]`: parts assigned to factor `k` for data point `i`.
    pub t: Vec<Vec<Vec<f64>>>,
    /// Noise parts per source.
    pub r: Vec<f64>,
}

/// Draws the multinomial split of every nonzero count with probabilities
/// proportional to `Φ[m,k] z_ik w_ik` and `λ_j`.
pub fn decompose_counts<R: Rng + ?Sized>(
    sparse: &[Vec<Vec<(usize, u64)>>],
    params: &PgmParams,
    assign: &Assignments,
    rng: &mut R,
) -> Result<(CountDecomposition, DecompositionSums)> {
    let kd = params.n_cols();
    let m = params.phi.first().map_or(0, Vec::len);
    let mut dec = CountDecomposition { n_cols: kd, ..Default::default() };
    let mut sums = DecompositionSums {
        s: vec![vec![0.0; m]; kd],
        t: sparse.iter().map(|src| vec![vec![0.0; src.len()]; kd]).collect(),
        r: vec![0.0; sparse.len()],
    };
    let mut weights = vec![0.0; kd + 1];
    let mut out = vec![0u64; kd + 1];
    for (j, src) in sparse.iter().enumerate() {
        let z = &assign.sources[j];
        for (i, nz) in src.iter().enumerate() {
            let active: Vec<usize> = (0..kd).filter(|&k| z.get(i, k)).collect();
            for &(row, count) in nz {
                weights.iter_mut().for_each(|w| *w = 0.0);
                for &k in &active {
                    weights[k] = params.phi[k][row] * params.w[j][k][i];
                }
                weights[kd] = params.lambda[j];
                multinomial_into(rng, count, &weights, &mut out)
                    .map_err(|_| Error::ImpossibleLikelihood(format!("count {count} at source {j}, point {i}, row {row} has zero rate")))?;
                for &k in &active {
                    let p = out[k] as f64;
                    sums.s[k][row] += p;
                    sums.t[j][k][i] += p;
                }
                sums.r[j] += out[kd] as f64;
                dec.cells.push(Cell { source: j, point: i, row, count });
                dec.parts.extend_from_slice(&out);
            }
        }
    }
    Ok((dec, sums))
}

/// `Φ[m,k] ~ gamma(a_φ + S[k][m], b_φ + Σ_{j,i} z_ik w_ik)`.
pub fn sample_phi<R: Rng + ?Sized>(params: &mut PgmParams, sums: &DecompositionSums, assign: &Assignments, rng: &mut R) -> Result<()> {
    for k in 0..params.n_cols() {
        let g: f64 = assign
            .sources
            .iter()
            .enumerate()
            .map(|(j, z)| z.column(k).iter().zip(&params.w[j][k]).filter(|(&on, _)| on).map(|(_, w)| w).sum::<f64>())
            .sum();
        let rate = params.hyper.b_phi + g;
        for (phi, s) in params.phi[k].iter_mut().zip(&sums.s[k]) {
            *phi = gamma(rng, params.hyper.a_phi + s, rate)?.max(f64::MIN_POSITIVE);
        }
    }
    Ok(())
}

/// `W_j[i,k] ~ gamma(a_w + T, b_wj + z_ik Σ_m Φ[m,k])`; inactive entries are
/// prior draws.
pub fn sample_w<R: Rng + ?Sized>(params: &mut PgmParams, sums: &DecompositionSums, assign: &Assignments, rng: &mut R) -> Result<()> {
    let col_sums: Vec<f64> = params.phi.iter().map(|c| c.iter().sum()).collect();
    for (j, z) in assign.sources.iter().enumerate() {
        let b = params.hyper.b_w[j];
        for k in 0..params.n_cols() {
            for i in 0..z.n_points() {
                let on = z.get(i, k);
                let rate = if on { b + col_sums[k] } else { b };
                let shape = params.hyper.a_w + if on { sums.t[j][k][i] } else { 0.0 };
                params.w[j][k][i] = gamma(rng, shape, rate)?.max(f64::MIN_POSITIVE);
            }
        }
    }
    Ok(())
}

/// `λ_j ~ gamma(a_λ + R_j, b_λ + M N_j)`, floored at `1e-12`.
pub fn sample_lambda<R: Rng + ?Sized>(
    params: &mut PgmParams,
    sums: &DecompositionSums,
    n_features: usize,
    n_points: &[usize],
    rng: &mut R,
) -> Result<()> {
    for j in 0..params.lambda.len() {
        let rate = params.hyper.b_lambda + (n_features * n_points[j]) as f64;
        params.lambda[j] = gamma(rng, params.hyper.a_lambda + sums.r[j], rate)?.max(MIN_LAMBDA);
    }
    Ok(())
}

/// `b_φ ~ gamma(1, rate = μ_φ)`, `b_wj ~ gamma(1, rate = μ_wj)`, where the
/// means run over the entries the data inform: factors of active columns
/// and weights with `z = 1`. Entries drawn from the prior would otherwise
/// feed the current scale back into itself and let it drift without bound.
/// Scales with nothing to average over are left unchanged.
pub fn resample_hyper_scales<R: Rng + ?Sized>(params: &mut PgmParams, assign: &Assignments, rng: &mut R) -> Result<()> {
    let (mut s, mut n) = (0.0, 0usize);
    for (k, col) in params.phi.iter().enumerate() {
        if assign.is_active(k) {
            s += col.iter().sum::<f64>();
            n += col.len();
        }
    }
    if n > 0 {
        params.hyper.b_phi = gamma(rng, 1.0, s / n as f64)?.max(1e-12);
    }
    for (j, z) in assign.sources.iter().enumerate() {
        let (mut s, mut n) = (0.0, 0usize);
        for (k, wk) in params.w[j].iter().enumerate() {
            for (i, &w) in wk.iter().enumerate() {
                if z.get(i, k) {
                    s += w;
                    n += 1;
                }
            }
        }
        if n > 0 {
            params.hyper.b_w[j] = gamma(rng, 1.0, s / n as f64)?.max(1e-12);
        }
    }
    Ok(())
}

/// Cached Poisson rates of one data point for the assignment sweep.
pub struct RowRates<'a> {
    pub counts: &'a [(usize, u64)],
    pub rates: Vec<f64>,
}

impl<'a> RowRates<'a> {
    pub fn new(params: &PgmParams, j: usize, i: usize, z: &SourceAssignments, counts: &'a [(usize, u64)]) -> Self {
        Self { counts, rates: params.rates(j, i, z) }
    }

    /// `ln L(z=1) - ln L(z=0)` for column `k` with weight `w`, given whether
    /// the column is currently on.
    pub fn log_ratio(&self, phi_k: &[f64], phi_k_sum: f64, w: f64, currently_on: bool) -> f64 {
        let mut acc = -w * phi_k_sum;
        for &(m, x) in self.counts {
            let contrib = w * phi_k[m];
            let (mu0, mu1) = if currently_on { (self.rates[m] - contrib, self.rates[m]) } else { (self.rates[m], self.rates[m] + contrib) };
            if mu0 <= 0.0 {
                return f64::INFINITY;
            }
            acc += x as f64 * (mu1 / mu0).ln();
        }
        acc
    }

    pub fn toggle(&mut self, phi_k: &[f64], w: f64, on: bool) {
        let sign = if on { w } else { -w };
        for (r, p) in self.rates.iter_mut().zip(phi_k) {
            *r += sign * p;
        }
    }
}

/// Gamma density used as a Metropolis-Hastings proposal.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GammaProposal {
    pub shape: f64,
    pub rate: f64,
}

impl GammaProposal {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        Ok(gamma(rng, self.shape, self.rate)?.max(f64::MIN_POSITIVE))
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        gamma_ln_pdf(x, self.shape, self.rate)
    }
}

/// Proposal rates for unexplained features are this many times the prior's,
/// so proposed factors stay close to the data point they are built from.
const BIRTH_SHARPEN: f64 = 10.0;

impl RowRates<'_> {
    /// Adds (`on`) or removes column `k`'s contribution. Rates never drop
    /// below the background rate `floor`, absorbing round-off.
    pub fn apply(&mut self, phi_k: &[f64], w: f64, on: bool, floor: f64) {
        for (r, p) in self.rates.iter_mut().zip(phi_k) {
            *r = if on { *r + w * p } else { (*r - w * p).max(floor) };
        }
    }

    /// `ln L(z=1) - ln L(z=0)` for a column with factor `phi_k` and weight
    /// `w` whose contribution is not in the cached rates.
    pub fn gain(&self, phi_k: &[f64], phi_k_sum: f64, w: f64) -> f64 {
        let mut acc = -w * phi_k_sum;
        for &(m, x) in self.counts {
            acc += x as f64 * (w * phi_k[m] / self.rates[m]).ln_1p();
        }
        acc
    }

    /// Gamma proposal for the weight of a column being switched on: the
    /// prior times a gamma kernel matched to the mode and half the curvature
    /// of the weight's log likelihood.
    pub fn weight_proposal(&self, phi_k: &[f64], phi_k_sum: f64, a_w: f64, b_w: f64) -> GammaProposal {
        let slope = |w: f64| -> f64 {
            self.counts.iter().map(|&(m, x)| x as f64 * phi_k[m] / (self.rates[m] + w * phi_k[m])).sum::<f64>() - phi_k_sum
        };
        let s0 = slope(0.0);
        if !(s0 > 0.0) || !s0.is_finite() {
            return GammaProposal { shape: a_w, rate: b_w + (-s0).max(0.0).min(1e300) };
        }
        let mut hi = 1.0;
        while slope(hi) > 0.0 && hi < 1e12 {
            hi *= 4.0;
        }
        let mut lo = 0.0;
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if slope(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let mode = 0.5 * (lo + hi);
        let curv: f64 = self
            .counts
            .iter()
            .map(|&(m, x)| {
                let d = self.rates[m] + mode * phi_k[m];
                x as f64 * phi_k[m] * phi_k[m] / (d * d)
            })
            .sum();
        let c = 0.5 * curv * mode * mode;
        let d = 0.5 * curv * mode;
        GammaProposal { shape: a_w + c, rate: b_w + d }
    }

    /// Proposal for a new factor used by this data point alone with weight
    /// `w`, built from the counts above the current rates.
    pub fn factor_proposal(&self, w: f64, a_phi: f64, b_phi: f64) -> Vec<GammaProposal> {
        let excess = self.counts.iter().map(|&(m, x)| (m, x as f64 - self.rates[m]));
        factor_proposal_from(self.rates.len(), excess, w, a_phi, b_phi)
    }
}

/// Per-feature gamma proposal for a factor carrying `counts` (feature,
/// amount) at weight `w`: positive amounts centre the feature on
/// `amount / w`, every other feature is shrunk towards zero.
pub fn factor_proposal_from(
    n_features: usize,
    counts: impl IntoIterator<Item = (usize, f64)>,
    w: f64,
    a_phi: f64,
    b_phi: f64,
) -> Vec<GammaProposal> {
    let mut q = vec![GammaProposal { shape: a_phi, rate: (b_phi + w) * BIRTH_SHARPEN }; n_features];
    for (m, y) in counts {
        if y > 0.0 {
            let shape = a_phi + y;
            q[m] = GammaProposal { shape, rate: shape * w / y };
        }
    }
    q
}

/// Log prior density of all Poisson-gamma parameters (hyper-scales held fixed).
pub fn log_prior(params: &PgmParams) -> f64 {
    let h = &params.hyper;
    let mut total: f64 = params.phi.iter().flatten().map(|&x| gamma_ln_pdf(x, h.a_phi, h.b_phi)).sum();
    for (j, w) in params.w.iter().enumerate() {
        total += w.iter().flatten().map(|&x| gamma_ln_pdf(x, h.a_w, h.b_w[j])).sum::<f64>();
    }
    total + params.lambda.iter().map(|&l| gamma_ln_pdf(l, h.a_lambda, h.b_lambda)).sum::<f64>()
}

pub fn gamma_ln_pdf(x: f64, shape: f64, rate: f64) -> f64 {
    if x <= 0.0 {
        return f64::NEG_INFINITY;
    }
    shape * rate.ln() - crate::dist::special::ln_gamma(shape) + (shape - 1.0) * x.ln() - rate * x
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::RngStream;

    fn naive_pmf(x: u64, mu: f64) -> f64 {
        let mut f = 1.0;
        for i in 1..=x {
            f *= i as f64;
        }
        mu.powi(x as i32) * (-mu).exp() / f
    }

    #[test]
    fn row_likelihood_examples() {
        let phi = vec![vec![1.0, 2.0]];
        assert!((row_log_likelihood(&[0.0, 0.0], &phi, &[true], &[1.0], 0.5) + 4.0).abs() < 1e-12);
        let phi = vec![vec![0.5]];
        assert!((row_log_likelihood(&[1.0], &phi, &[true], &[1.0], 0.5) + 1.0).abs() < 1e-12);
        assert_eq!(row_log_likelihood(&[1.0], &phi, &[false], &[1.0], 0.0), f64::NEG_INFINITY);
    }

    #[test]
    fn row_likelihood_matches_naive_product() {
        let mut rng = RngStream::new(9, 0);
        for _ in 0..20 {
            let phi: Vec<Vec<f64>> = (0..3).map(|_| (0..4).map(|_| gamma(&mut rng, 1.0, 1.0).unwrap()).collect()).collect();
            let w: Vec<f64> = (0..3).map(|_| gamma(&mut rng, 1.0, 1.0).unwrap()).collect();
            let z = [true, false, true];
            let x: Vec<u64> = (0..4).map(|m| m as u64 * 2).collect();
            let mut p = 1.0;
            for m in 0..4 {
                let mu = 0.3 + phi[0][m] * w[0] + phi[2][m] * w[2];
                p *= naive_pmf(x[m], mu);
            }
            let xf: Vec<f64> = x.iter().map(|&v| v as f64).collect();
            let ll = row_log_likelihood(&xf, &phi, &z, &w, 0.3);
            assert!((ll - p.ln()).abs() < 1e-10);
        }
    }

    fn one_cell(count: u64, phi: Vec<f64>, lambda: f64) -> (PgmParams, Assignments, Vec<Vec<Vec<(usize, u64)>>>) {
        let k = phi.len();
        let params = PgmParams {
            phi: phi.into_iter().map(|p| vec![p]).collect(),
            w: vec![vec![vec![1.0]; k]],
            lambda: vec![lambda],
            hyper: PgmHyper::new(1),
        };
        let mut a = Assignments::zeros(&[1], k);
        for c in 0..k {
            a.sources[0].set(0, c, true);
        }
        (params, a, vec![vec![vec![(0, count)]]])
    }

    #[test]
    fn decomposition_conserves_and_matches_moments() {
        let (params, a, sparse) = one_cell(6, vec![1.0, 2.0], 3.0);
        let mut rng = RngStream::new(10, 0);
        let n = 10_000;
        let mut means = [0.0; 3];
        for _ in 0..n {
            let (dec, _) = decompose_counts(&sparse, &params, &a, &mut rng).unwrap();
            dec.verify().unwrap();
            for (m, p) in means.iter_mut().zip(dec.parts_of(0)) {
                *m += *p as f64 / n as f64;
            }
        }
        for (c, (m, target)) in means.iter().zip([1.0, 2.0, 3.0]).enumerate() {
            let p = target / 6.0;
            let se = (6.0 * p * (1.0 - p) / n as f64).sqrt();
            assert!((m - target).abs() < 3.0 * se, "component {c}: {m}");
        }
    }

    #[test]
    fn zero_rate_with_count_is_impossible() {
        let (mut params, mut a, sparse) = one_cell(2, vec![1.0], 1.0);
        a.sources[0].set(0, 0, false);
        params.lambda[0] = 0.0;
        let mut rng = RngStream::new(11, 0);
        assert!(matches!(decompose_counts(&sparse, &params, &a, &mut rng), Err(Error::ImpossibleLikelihood(_))));
    }

    #[test]
    fn conjugate_arithmetic() {
        // S=10, G=4 with (1,1): gamma(11, 5)
        let mut rng = RngStream::new(12, 0);
        let mut params = PgmParams { phi: vec![vec![1.0]], w: vec![vec![vec![4.0]]], lambda: vec![1.0], hyper: PgmHyper::new(1) };
        let mut a = Assignments::zeros(&[1], 1);
        a.sources[0].set(0, 0, true);
        let sums = DecompositionSums { s: vec![vec![10.0]], t: vec![vec![vec![6.0]]], r: vec![0.0] };
        let n = 20_000;
        let mut acc = 0.0;
        for _ in 0..n {
            sample_phi(&mut params, &sums, &a, &mut rng).unwrap();
            acc += params.phi[0][0];
        }
        let mean = acc / n as f64;
        let sd = 11f64.sqrt() / 5.0;
        assert!((mean - 2.2).abs() < 3.0 * sd / (n as f64).sqrt());
    }

    #[test]
    fn lambda_arithmetic() {
        let mut rng = RngStream::new(13, 0);
        let mut params = PgmParams { phi: vec![], w: vec![vec![]], lambda: vec![1.0], hyper: PgmHyper::new(1) };
        let sums = DecompositionSums { s: vec![], t: vec![vec![]], r: vec![0.0] };
        let n = 20_000;
        let mut acc = 0.0;
        for _ in 0..n {
            sample_lambda(&mut params, &sums, 2, &[5], &mut rng).unwrap();
            acc += params.lambda[0];
        }
        assert!((acc / n as f64 - 1.0 / 11.0).abs() < 3.0 / 11.0 / (n as f64).sqrt());
    }

    #[test]
    fn hyper_scale_mean() {
        let mut rng = RngStream::new(14, 0);
        let mut params = PgmParams { phi: vec![vec![2.0; 3]], w: vec![vec![vec![1.0; 2]]], lambda: vec![1.0], hyper: PgmHyper::new(1) };
        let assign = Assignments { sources: vec![SourceAssignments::from_rows(2, 1, &[vec![0], vec![0]]).unwrap()] };
        let before = (params.phi.clone(), params.w.clone());
        let n = 20_000;
        let mut acc = 0.0;
        for _ in 0..n {
            resample_hyper_scales(&mut params, &assign, &mut rng).unwrap();
            acc += params.hyper.b_phi;
        }
        assert!((acc / n as f64 - 0.5).abs() < 3.0 * 0.5 / (n as f64).sqrt());
        assert_eq!(before, (params.phi.clone(), params.w.clone()));
    }

    #[test]
    fn cached_ratio_matches_direct() {
        let mut rng = RngStream::new(15, 0);
        let params = PgmParams::from_prior(5, &[3], 3, PgmHyper::new(1), &mut rng).unwrap();
        let z = SourceAssignments::from_rows(3, 3, &[vec![0, 2], vec![1], vec![]]).unwrap();
        let x = [0.0, 3.0, 1.0, 0.0, 2.0];
        let counts: Vec<(usize, u64)> = x.iter().enumerate().filter(|(_, &v)| v > 0.0).map(|(m, &v)| (m, v as u64)).collect();
        let cache = RowRates::new(&params, 0, 0, &z, &counts);
        for k in 0..3 {
            let w_row: Vec<f64> = (0..3).map(|c| params.w[0][c][0]).collect();
            let mut on = [z.get(0, 0), z.get(0, 1), z.get(0, 2)];
            on[k] = true;
            let l1 = row_log_likelihood(&x, &params.phi, &on, &w_row, params.lambda[0]);
            on[k] = false;
            let l0 = row_log_likelihood(&x, &params.phi, &on, &w_row, params.lambda[0]);
            let s: f64 = params.phi[k].iter().sum();
            let r = cache.log_ratio(&params.phi[k], s, params.w[0][k][0], z.get(0, k));
            assert!((r - (l1 - l0)).abs() < 1e-10);
        }
    }
}
