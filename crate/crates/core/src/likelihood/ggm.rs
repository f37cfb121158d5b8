//! Gaussian factor model: `X_j[:, i] ~ N(Φ (z_i ⊙ w_i), σ²_nj I)` with
//! zero-mean Gaussian priors on `Φ` and `W_j` and gamma priors on the three
//! kinds of precision.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::SourceDataset;
use crate::dist::rng::{gamma, normal};
use crate::error::{Error, Result};
use crate::rhbp::{Assignments, SourceAssignments};

use super::pgm::gamma_ln_pdf;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Gamma (shape, rate) priors on the precisions `1/σ²`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GgmHyper {
    pub phi: (f64, f64),
    pub w: (f64, f64),
    pub noise: (f64, f64),
}

impl Default for GgmHyper {
    fn default() -> Self {
        Self { phi: (1.0, 1.0), w: (1.0, 1.0), noise: (1.0, 1.0) }
    }
}

/// `phi[k][m]`, `w[j][k][i]`, and variances.
#[derive(Clone, Debug, PartialEq)]
pub struct GgmParams {
    pub phi: Vec<Vec<f64>>,
    pub w: Vec<Vec<Vec<f64>>>,
    pub var_phi: f64,
    pub var_w: Vec<f64>,
    pub var_noise: Vec<f64>,
    pub hyper: GgmHyper,
}

fn variance_from_prior<R: Rng + ?Sized>((shape, rate): (f64, f64), rng: &mut R) -> Result<f64> {
    Ok(1.0 / gamma(rng, shape, rate)?.max(1e-300))
}

impl GgmParams {
    pub fn from_prior<R: Rng + ?Sized>(n_features: usize, n_points: &[usize], n_cols: usize, hyper: GgmHyper, rng: &mut R) -> Result<Self> {
        let var_phi = variance_from_prior(hyper.phi, rng)?;
        let var_w = n_points.iter().map(|_| variance_from_prior(hyper.w, rng)).collect::<Result<_>>()?;
        let var_noise = n_points.iter().map(|_| variance_from_prior(hyper.noise, rng)).collect::<Result<_>>()?;
        let mut p = Self { phi: Vec::new(), w: vec![Vec::new(); n_points.len()], var_phi, var_w, var_noise, hyper };
        for _ in 0..n_cols {
            p.push_prior_column(n_features, n_points, rng)?;
        }
        Ok(p)
    }

    pub fn n_cols(&self) -> usize {
        self.phi.len()
    }

    pub fn push_prior_column<R: Rng + ?Sized>(&mut self, n_features: usize, n_points: &[usize], rng: &mut R) -> Result<()> {
        let sd = self.var_phi.sqrt();
        self.phi.push((0..n_features).map(|_| normal(rng, 0.0, sd)).collect());
        for (j, &n) in n_points.iter().enumerate() {
            let sd = self.var_w[j].sqrt();
            self.w[j].push((0..n).map(|_| normal(rng, 0.0, sd)).collect());
        }
        Ok(())
    }

    pub fn truncate(&mut self, n_cols: usize) {
        self.phi.truncate(n_cols);
        for w in &mut self.w {
            w.truncate(n_cols);
        }
    }

    /// `Φ (z_i ⊙ w_i)` for data point `i` of source `j`.
    pub fn mean(&self, j: usize, i: usize, z: &SourceAssignments) -> Vec<f64> {
        let m = self.phi.first().map_or(0, Vec::len);
        let mut mu = vec![0.0; m];
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
        let ok = |v: f64| v > 0.0 && v.is_finite();
        if !ok(self.var_phi) || !self.var_w.iter().all(|&v| ok(v)) || !self.var_noise.iter().all(|&v| ok(v)) {
            return Err(Error::StateCorruption("non-positive Gaussian variance".into()));
        }
        if self.phi.iter().flatten().chain(self.w.iter().flatten().flatten()).any(|x| !x.is_finite()) {
            return Err(Error::StateCorruption("non-finite Gaussian parameter".into()));
        }
        Ok(())
    }
}

/// Isotropic Gaussian log-density of `x` around `Φ (z ⊙ w)`.
pub fn row_log_likelihood(x: &[f64], phi: &[Vec<f64>], z_row: &[bool], w_row: &[f64], var: f64) -> f64 {
    let mut ss = 0.0;
    for (m, &xm) in x.iter().enumerate() {
        let mut mu = 0.0;
        for (k, phi_k) in phi.iter().enumerate() {
            if z_row[k] {
                mu += phi_k[m] * w_row[k];
            }
        }
        ss += (xm - mu) * (xm - mu);
    }
    gaussian_ln_density(ss, x.len(), var)
}

fn gaussian_ln_density(ss: f64, dims: usize, var: f64) -> f64 {
    -0.5 * dims as f64 * (LN_2PI + var.ln()) - 0.5 * ss / var
}

pub fn source_sq_residual(data: &SourceDataset, j: usize, params: &GgmParams, z: &SourceAssignments) -> f64 {
    let x = data.matrix(j);
    (0..x.cols())
        .map(|i| {
            let mu = params.mean(j, i, z);
            x.column(i).iter().zip(&mu).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
        })
        .sum()
}

pub fn source_log_likelihood(data: &SourceDataset, j: usize, params: &GgmParams, z: &SourceAssignments) -> f64 {
    let x = data.matrix(j);
    gaussian_ln_density(source_sq_residual(data, j, params, z), x.rows() * x.cols(), params.var_noise[j])
}

/// Residual of one data point, used by the assignment sweep. The weight of
/// the entry being resampled is integrated out.
pub struct RowResidual {
    pub resid: Vec<f64>,
}

/// Outcome of evaluating one entry: the log likelihood ratio and the
/// Gaussian conditional of its weight when switched on.
#[derive(Clone, Copy, Debug)]
pub struct CollapsedEntry {
    pub log_ratio: f64,
    pub post_mean: f64,
    pub post_var: f64,
}

impl RowResidual {
    pub fn new(x: &[f64], params: &GgmParams, j: usize, i: usize, z: &SourceAssignments) -> Self {
        let mu = params.mean(j, i, z);
        Self { resid: x.iter().zip(&mu).map(|(a, b)| a - b).collect() }
    }

    /// With `r` the residual excluding column `k`, `p = |φ_k|²/σ²_n + 1/σ²_w`
    /// and `b = φ_k·r/σ²_n`: `ln L1 - ln L0 = b²/(2p) - ½ ln(σ²_w p)`.
    pub fn collapsed(&self, phi_k: &[f64], phi_k_sq: f64, w_cur: f64, on: bool, var_w: f64, var_n: f64) -> CollapsedEntry {
        let mut dot = 0.0;
        for (r, p) in self.resid.iter().zip(phi_k) {
            let r_minus = if on { r + w_cur * p } else { *r };
            dot += r_minus * p;
        }
        let prec = phi_k_sq / var_n + 1.0 / var_w;
        let b = dot / var_n;
        CollapsedEntry { log_ratio: b * b / (2.0 * prec) - 0.5 * (var_w * prec).ln(), post_mean: b / prec, post_var: 1.0 / prec }
    }

    /// Replaces the contribution `w_old` (if on) by `w_new` (if on).
    pub fn update(&mut self, phi_k: &[f64], old: Option<f64>, new: Option<f64>) {
        let delta = old.unwrap_or(0.0) - new.unwrap_or(0.0);
        if delta != 0.0 {
            for (r, p) in self.resid.iter_mut().zip(phi_k) {
                *r += delta * p;
            }
        }
    }
}

fn sample_mvn<R: Rng + ?Sized>(prec: DMatrix<f64>, rhs: &DVector<f64>, rng: &mut R) -> Result<DVector<f64>> {
    let n = rhs.len();
    let chol = prec.cholesky().ok_or_else(|| Error::Degenerate("posterior precision not positive definite".into()))?;
    let mean = chol.solve(rhs);
    let eps = DVector::from_fn(n, |_, _| normal(rng, 0.0, 1.0));
    let dev = chol.l().tr_solve_lower_triangular(&eps).expect("nonsingular factor");
    Ok(mean + dev)
}

/// Row-blocked update of `Φ`: each feature row is Gaussian with the shared
/// precision `I/σ²_φ + Σ_j H_jᵀH_j/σ²_nj`.
pub fn sample_phi<R: Rng + ?Sized>(params: &mut GgmParams, data: &SourceDataset, assign: &Assignments, rng: &mut R) -> Result<()> {
    let kd = params.n_cols();
    if kd == 0 {
        return Ok(());
    }
    let m = data.n_features();
    let mut prec = DMatrix::<f64>::identity(kd, kd) / params.var_phi;
    let mut rhs = DMatrix::<f64>::zeros(m, kd);
    for (j, z) in assign.sources.iter().enumerate() {
        let x = data.matrix(j);
        let s2 = params.var_noise[j];
        for i in 0..z.n_points() {
            let h: Vec<(usize, f64)> = (0..kd).filter(|&k| z.get(i, k)).map(|k| (k, params.w[j][k][i])).collect();
            for &(a, ha) in &h {
                for &(b, hb) in &h {
                    prec[(a, b)] += ha * hb / s2;
                }
            }
            let col = x.column(i);
            for &(k, hk) in &h {
                let c = hk / s2;
                for (row, &xm) in col.iter().enumerate() {
                    rhs[(row, k)] += xm * c;
                }
            }
        }
    }
    let chol = prec.cholesky().ok_or_else(|| Error::Degenerate("Φ posterior precision not positive definite".into()))?;
    for row in 0..m {
        let r = rhs.row(row).transpose();
        let mean = chol.solve(&r);
        let eps = DVector::from_fn(kd, |_, _| normal(rng, 0.0, 1.0));
        let dev = chol.l().tr_solve_lower_triangular(&eps).expect("nonsingular factor");
        for k in 0..kd {
            params.phi[k][row] = mean[k] + dev[k];
        }
    }
    Ok(())
}

/// Per-point update of `W_j`: active coordinates jointly Gaussian, inactive
/// ones redrawn from the prior.
pub fn sample_w<R: Rng + ?Sized>(params: &mut GgmParams, data: &SourceDataset, assign: &Assignments, rng: &mut R) -> Result<()> {
    let kd = params.n_cols();
    for (j, z) in assign.sources.iter().enumerate() {
        let x = data.matrix(j);
        let (vw, vn) = (params.var_w[j], params.var_noise[j]);
        for i in 0..z.n_points() {
            let active: Vec<usize> = (0..kd).filter(|&k| z.get(i, k)).collect();
            for k in 0..kd {
                if !z.get(i, k) {
                    params.w[j][k][i] = normal(rng, 0.0, vw.sqrt());
                }
            }
            if active.is_empty() {
                continue;
            }
            let na = active.len();
            let prec = DMatrix::from_fn(na, na, |a, b| {
                let dot: f64 = params.phi[active[a]].iter().zip(&params.phi[active[b]]).map(|(p, q)| p * q).sum();
                dot / vn + if a == b { 1.0 / vw } else { 0.0 }
            });
            let col = x.column(i);
            let rhs = DVector::from_fn(na, |a, _| params.phi[active[a]].iter().zip(col).map(|(p, x)| p * x).sum::<f64>() / vn);
            let draw = sample_mvn(prec, &rhs, rng)?;
            for (a, &k) in active.iter().enumerate() {
                params.w[j][k][i] = draw[a];
            }
        }
    }
    Ok(())
}

/// Conjugate gamma updates of every precision.
pub fn sample_variances<R: Rng + ?Sized>(params: &mut GgmParams, data: &SourceDataset, assign: &Assignments, rng: &mut R) -> Result<()> {
    let h = params.hyper.clone();
    let count = params.phi.iter().map(Vec::len).sum::<usize>() as f64;
    let ss: f64 = params.phi.iter().flatten().map(|x| x * x).sum();
    params.var_phi = 1.0 / gamma(rng, h.phi.0 + count / 2.0, h.phi.1 + ss / 2.0)?.max(1e-300);
    for j in 0..params.w.len() {
        let count = params.w[j].iter().map(Vec::len).sum::<usize>() as f64;
        let ss: f64 = params.w[j].iter().flatten().map(|x| x * x).sum();
        params.var_w[j] = 1.0 / gamma(rng, h.w.0 + count / 2.0, h.w.1 + ss / 2.0)?.max(1e-300);
        let x = data.matrix(j);
        let ssr = source_sq_residual(data, j, params, &assign.sources[j]);
        let dims = (x.rows() * x.cols()) as f64;
        params.var_noise[j] = 1.0 / gamma(rng, h.noise.0 + dims / 2.0, h.noise.1 + ssr / 2.0)?.max(1e-300);
    }
    Ok(())
}

/// Log prior of all Gaussian-model parameters, precisions included.
pub fn log_prior(params: &GgmParams) -> f64 {
    let h = &params.hyper;
    let normal_ss = |xs: &mut dyn Iterator<Item = &f64>, var: f64| {
        let (ss, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x * x, n + 1));
        gaussian_ln_density(ss, n, var)
    };
    let mut total = normal_ss(&mut params.phi.iter().flatten(), params.var_phi) + gamma_ln_pdf(1.0 / params.var_phi, h.phi.0, h.phi.1);
    for j in 0..params.w.len() {
        total += normal_ss(&mut params.w[j].iter().flatten(), params.var_w[j]);
        total += gamma_ln_pdf(1.0 / params.var_w[j], h.w.0, h.w.1);
        total += gamma_ln_pdf(1.0 / params.var_noise[j], h.noise.0, h.noise.1);
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SourceMatrix;
    use crate::dist::RngStream;

    #[test]
    fn zero_residual_density() {
        let phi = vec![vec![1.0, 2.0]];
        let ll = row_log_likelihood(&[2.0, 4.0], &phi, &[true], &[2.0], 1.0);
        assert!((ll + (2.0 * std::f64::consts::PI).ln()).abs() < 1e-12);
        let ll = row_log_likelihood(&[0.0; 3], &[], &[], &[], 0.3);
        assert!((ll + 1.5 * (2.0 * std::f64::consts::PI * 0.3).ln()).abs() < 1e-12);
    }

    #[test]
    fn density_matches_per_dimension_product() {
        let phi = vec![vec![0.3, -1.0, 2.0], vec![1.0, 0.5, 0.0]];
        let x = [0.1f64, 0.2, -0.7];
        let w = [0.8, -1.3];
        let var = 0.7f64;
        let mut p = 1.0f64;
        for m in 0..3 {
            let mu = phi[0][m] * w[0] + phi[1][m] * w[1];
            p *= (-(x[m] - mu).powi(2) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt();
        }
        assert!((row_log_likelihood(&x, &phi, &[true, true], &w, var) - p.ln()).abs() < 1e-10);
    }

    #[test]
    fn collapsed_ratio_matches_quadrature() {
        let phi = vec![vec![0.5, -1.0]];
        let x = [0.4, -0.9];
        let (vw, vn) = (1.3, 0.4);
        let z = SourceAssignments::zeros(1, 1);
        let params = GgmParams {
            phi: phi.clone(),
            w: vec![vec![vec![0.0]]],
            var_phi: 1.0,
            var_w: vec![vw],
            var_noise: vec![vn],
            hyper: GgmHyper::default(),
        };
        let r = RowResidual::new(&x, &params, 0, 0, &z);
        let e = r.collapsed(&phi[0], 1.25, 0.0, false, vw, vn);
        // ∫ N(x; φw, vn) N(w; 0, vw) dw / N(x; 0, vn)
        let n = 200_000;
        let (lo, hi) = (-12.0, 12.0);
        let dw = (hi - lo) / n as f64;
        let l0 = row_log_likelihood(&x, &phi, &[false], &[0.0], vn);
        let integral: f64 = (0..n)
            .map(|t| {
                let w = lo + (t as f64 + 0.5) * dw;
                let l1 = row_log_likelihood(&x, &phi, &[true], &[w], vn);
                (l1 - l0).exp() * (-w * w / (2.0 * vw)).exp() / (2.0 * std::f64::consts::PI * vw).sqrt() * dw
            })
            .sum();
        assert!((e.log_ratio - integral.ln()).abs() < 1e-8);
    }

    #[test]
    fn phi_posterior_is_ridge() {
        // 3×2 ridge: one source, two points, both columns active
        let x = SourceMatrix::from_columns(3, &[vec![1.0, 2.0, 0.5], vec![-1.0, 0.0, 3.0]]).unwrap();
        let data = SourceDataset::from_matrices(vec![x.clone()]).unwrap();
        let w = vec![vec![vec![1.0, 0.5], vec![-0.3, 2.0]]];
        let mut a = Assignments::zeros(&[2], 2);
        for i in 0..2 {
            for k in 0..2 {
                a.sources[0].set(i, k, true);
            }
        }
        let (vphi, vn) = (2.0, 0.5);
        let mut params =
            GgmParams { phi: vec![vec![0.0; 3]; 2], w, var_phi: vphi, var_w: vec![1.0], var_noise: vec![vn], hyper: GgmHyper::default() };
        // ridge oracle: Φ_m = (HᵀH + (vn/vphi) I)^{-1} Hᵀ x_m
        let h = DMatrix::from_row_slice(2, 2, &[1.0, -0.3, 0.5, 2.0]);
        let a_mat = h.transpose() * &h + DMatrix::identity(2, 2) * (vn / vphi);
        let inv = a_mat.try_inverse().unwrap();
        let mut rng = RngStream::new(20, 0);
        let n = 20_000;
        let mut acc = vec![[0.0; 2]; 3];
        for _ in 0..n {
            sample_phi(&mut params, &data, &a, &mut rng).unwrap();
            for m in 0..3 {
                acc[m][0] += params.phi[0][m] / n as f64;
                acc[m][1] += params.phi[1][m] / n as f64;
            }
        }
        for m in 0..3 {
            let xm = DVector::from_vec(vec![x.get(m, 0), x.get(m, 1)]);
            let expect = &inv * h.transpose() * xm;
            for k in 0..2 {
                let sd = (inv[(k, k)] * vn).sqrt();
                assert!((acc[m][k] - expect[k]).abs() < 4.0 * sd / (n as f64).sqrt(), "row {m} col {k}");
            }
        }
    }

    #[test]
    fn w_without_active_columns_is_prior() {
        let data = SourceDataset::from_matrices(vec![SourceMatrix::zeros(2, 1)]).unwrap();
        let a = Assignments::zeros(&[1], 1);
        let mut params = GgmParams {
            phi: vec![vec![1.0, 1.0]],
            w: vec![vec![vec![5.0]]],
            var_phi: 1.0,
            var_w: vec![4.0],
            var_noise: vec![1.0],
            hyper: GgmHyper::default(),
        };
        let mut rng = RngStream::new(21, 0);
        let n = 20_000;
        let mut ss = 0.0;
        for _ in 0..n {
            sample_w(&mut params, &data, &a, &mut rng).unwrap();
            ss += params.w[0][0][0].powi(2);
        }
        assert!((ss / n as f64 - 4.0).abs() < 0.2);
    }

    #[test]
    fn projection_limit_for_orthonormal_factors() {
        let x = SourceMatrix::from_columns(3, &[vec![2.0, -1.0, 0.5]]).unwrap();
        let data = SourceDataset::from_matrices(vec![x]).unwrap();
        let mut a = Assignments::zeros(&[1], 2);
        a.sources[0].set(0, 0, true);
        a.sources[0].set(0, 1, true);
        let mut params = GgmParams {
            phi: vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]],
            w: vec![vec![vec![0.0], vec![0.0]]],
            var_phi: 1.0,
            var_w: vec![1.0],
            var_noise: vec![1e-10],
            hyper: GgmHyper::default(),
        };
        let mut rng = RngStream::new(22, 0);
        sample_w(&mut params, &data, &a, &mut rng).unwrap();
        assert!((params.w[0][0][0] - 2.0).abs() < 1e-4);
        assert!((params.w[0][1][0] + 1.0).abs() < 1e-4);
    }
}
