use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ordered stick weights of the parent process. The last stick (index
/// `k_dagger() - 1`, zero-based) is the single represented inactive one.
#[derive(Clone, Debug, PartialEq)]
pub struct StickState {
    pub betas: Vec<f64>,
    pub tau0: f64,
    pub rho: f64,
}

impl StickState {
    pub fn new(betas: Vec<f64>, tau0: f64) -> Result<Self> {
        let s = Self { betas, tau0, rho: 1.0 };
        s.validate()?;
        Ok(s)
    }

    pub fn k_dagger(&self) -> usize {
        self.betas.len()
    }

    /// `β_(k-1)` with `β_(0) = 1`, zero-based.
    pub fn upper_bound(&self, k: usize) -> f64 {
        if k == 0 {
            1.0
        } else {
            self.betas[k - 1]
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.betas.is_empty() {
            return Err(Error::StateCorruption("no represented sticks".into()));
        }
        if !(self.tau0 >= 0.0 && self.tau0.is_finite()) {
            return Err(Error::StateCorruption(format!("tau0 = {}", self.tau0)));
        }
        let mut prev = 1.0;
        for (k, &b) in self.betas.iter().enumerate() {
            if !(b > 0.0 && b <= prev) {
                return Err(Error::StateCorruption(format!("stick {k} = {b} breaks ordering (prev {prev})")));
            }
            prev = b;
        }
        Ok(())
    }
}

/// Binary assignment matrix of one source with cached column counts.
#[derive(Clone, Debug, PartialEq)]
pub struct SourceAssignments {
    n_points: usize,
    columns: Vec<Vec<bool>>,
    counts: Vec<usize>,
}

impl SourceAssignments {
    pub fn zeros(n_points: usize, n_cols: usize) -> Self {
        Self { n_points, columns: vec![vec![false; n_points]; n_cols], counts: vec![0; n_cols] }
    }

    /// Builds from per-point lists of active column indices.
    pub fn from_rows(n_points: usize, n_cols: usize, rows: &[Vec<usize>]) -> Result<Self> {
        if rows.len() != n_points {
            return Err(Error::DimensionMismatch(format!("{} rows for {n_points} points", rows.len())));
        }
        let mut z = Self::zeros(n_points, n_cols);
        for (i, row) in rows.iter().enumerate() {
            for &k in row {
                if k >= n_cols {
                    return Err(Error::DimensionMismatch(format!("column {k} ≥ {n_cols}")));
                }
                z.set(i, k, true);
            }
        }
        Ok(z)
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn get(&self, i: usize, k: usize) -> bool {
        self.columns[k][i]
    }

    pub fn set(&mut self, i: usize, k: usize, z: bool) {
        let cell = &mut self.columns[k][i];
        if *cell != z {
            *cell = z;
            if z {
                self.counts[k] += 1;
            } else {
                self.counts[k] -= 1;
            }
        }
    }

    pub fn column(&self, k: usize) -> &[bool] {
        &self.columns[k]
    }

    /// `n_jk`.
    pub fn count(&self, k: usize) -> usize {
        self.counts[k]
    }

    /// `N_j - n_jk`.
    pub fn complement(&self, k: usize) -> usize {
        self.n_points - self.counts[k]
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn active_in_row(&self, i: usize) -> Vec<usize> {
        (0..self.n_cols()).filter(|&k| self.columns[k][i]).collect()
    }

    pub fn rows(&self) -> Vec<Vec<usize>> {
        (0..self.n_points).map(|i| self.active_in_row(i)).collect()
    }

    pub fn push_zero_column(&mut self) {
        self.columns.push(vec![false; self.n_points]);
        self.counts.push(0);
    }

    pub fn truncate(&mut self, n_cols: usize) {
        self.columns.truncate(n_cols);
        self.counts.truncate(n_cols);
    }

    pub fn check_counts(&self) -> Result<()> {
        for (k, col) in self.columns.iter().enumerate() {
            let n = col.iter().filter(|&&z| z).count();
            if n != self.counts[k] {
                return Err(Error::StateCorruption(format!("cached count {} ≠ {n} in column {k}", self.counts[k])));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Assignments {
    pub sources: Vec<SourceAssignments>,
}

impl Assignments {
    pub fn zeros(n_points: &[usize], n_cols: usize) -> Self {
        Self { sources: n_points.iter().map(|&n| SourceAssignments::zeros(n, n_cols)).collect() }
    }

    pub fn n_cols(&self) -> usize {
        self.sources.first().map_or(0, SourceAssignments::n_cols)
    }

    /// Number of data points, over all sources, using column `k`.
    pub fn total_count(&self, k: usize) -> usize {
        self.sources.iter().map(|s| s.count(k)).sum()
    }

    pub fn is_active(&self, k: usize) -> bool {
        self.sources.iter().any(|s| s.count(k) > 0)
    }

    /// Largest active column index, if any.
    pub fn last_active(&self) -> Option<usize> {
        (0..self.n_cols()).rev().find(|&k| self.is_active(k))
    }

    /// Number of columns used by at least one data point.
    pub fn active_k(&self) -> usize {
        (0..self.n_cols()).filter(|&k| self.is_active(k)).count()
    }

    pub fn push_zero_column(&mut self) {
        for s in &mut self.sources {
            s.push_zero_column();
        }
    }

    pub fn truncate(&mut self, n_cols: usize) {
        for s in &mut self.sources {
            s.truncate(n_cols);
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Concentrations {
    pub alpha: Vec<f64>,
    /// Gamma prior (shape, rate) shared by every `α_j`.
    pub prior_shape: f64,
    pub prior_rate: f64,
}

impl Concentrations {
    pub fn new(alpha: Vec<f64>, prior_shape: f64, prior_rate: f64) -> Result<Self> {
        if alpha.iter().any(|&a| !(a > 0.0 && a.is_finite())) || !(prior_shape > 0.0) || !(prior_rate > 0.0) {
            return Err(Error::InvalidArgument("concentrations must be positive".into()));
        }
        Ok(Self { alpha, prior_shape, prior_rate })
    }
}

/// Auxiliary integers and beta variables from the latest sweep, kept for
/// diagnostics; they are redrawn every sweep and never enter the log joint.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AuxState {
    /// `v[t][j]` for every stick created during the latest extension.
    pub v: Vec<Vec<usize>>,
    /// `m[j][k]`.
    pub m: Vec<Vec<usize>>,
    /// `l[j][k]`.
    pub l: Vec<Vec<usize>>,
    /// `w[j][k]`, the beta auxiliaries of the concentration update.
    pub w: Vec<Vec<f64>>,
}

impl AuxState {
    pub fn m_sums(&self) -> Vec<usize> {
        column_sums(&self.m)
    }

    pub fn l_sums(&self) -> Vec<usize> {
        column_sums(&self.l)
    }
}

fn column_sums(rows: &[Vec<usize>]) -> Vec<usize> {
    let k = rows.iter().map(Vec::len).max().unwrap_or(0);
    let mut out = vec![0; k];
    for r in rows {
        for (o, x) in out.iter_mut().zip(r) {
            *o += x;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cached_counts_follow_sets() {
        let mut z = SourceAssignments::zeros(3, 2);
        z.set(0, 1, true);
        z.set(2, 1, true);
        z.set(2, 1, true);
        assert_eq!(z.count(1), 2);
        assert_eq!(z.complement(1), 1);
        z.set(0, 1, false);
        assert_eq!(z.count(1), 1);
        z.check_counts().unwrap();
    }

    #[test]
    fn last_active_over_sources() {
        let mut a = Assignments::zeros(&[2, 2], 4);
        assert_eq!(a.last_active(), None);
        a.sources[1].set(0, 2, true);
        a.sources[0].set(1, 0, true);
        assert_eq!(a.last_active(), Some(2));
        assert_eq!(a.active_k(), 2);
    }

    #[test]
    fn stick_ordering_checked() {
        assert!(StickState::new(vec![0.9, 0.4, 0.1], 1.0).is_ok());
        assert!(StickState::new(vec![0.4, 0.9], 1.0).is_err());
        assert!(StickState::new(vec![], 1.0).is_err());
    }
}
