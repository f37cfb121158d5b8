//! In-memory data sources: one `M × N_j` matrix per source over a shared row
//! dictionary. Data points (columns) are stored contiguously.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataMode {
    Counts,
    Reals,
}

/// Dense column-major matrix: `get(m, i)` is feature `m` of data point `i`.
#[derive(Clone, Debug, PartialEq)]
pub struct SourceMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl SourceMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_column_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!("{} values for a {rows}×{cols} matrix", data.len())));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_columns(rows: usize, columns: &[Vec<f64>]) -> Result<Self> {
        let mut data = Vec::with_capacity(rows * columns.len());
        for c in columns {
            if c.len() != rows {
                return Err(Error::DimensionMismatch(format!("column of length {} (expected {rows})", c.len())));
            }
            data.extend_from_slice(c);
        }
        Ok(Self { rows, cols: columns.len(), data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, m: usize, i: usize) -> f64 {
        self.data[i * self.rows + m]
    }

    pub fn set(&mut self, m: usize, i: usize, v: f64) {
        self.data[i * self.rows + m] = v;
    }

    pub fn column(&self, i: usize) -> &[f64] {
        &self.data[i * self.rows..(i + 1) * self.rows]
    }

    pub fn column_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.rows..(i + 1) * self.rows]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Keeps only the listed data points, in the given order.
    pub fn select_columns(&self, idx: &[usize]) -> Self {
        let mut data = Vec::with_capacity(self.rows * idx.len());
        for &i in idx {
            data.extend_from_slice(self.column(i));
        }
        Self { rows: self.rows, cols: idx.len(), data }
    }

    pub fn is_count_valued(&self) -> bool {
        self.data.iter().all(|&x| x >= 0.0 && x.fract() == 0.0 && x.is_finite())
    }

    /// `(row, count)` pairs of the nonzero entries of each data point.
    pub fn sparse_counts(&self) -> Vec<Vec<(usize, u64)>> {
        (0..self.cols).map(|i| self.column(i).iter().enumerate().filter(|(_, &x)| x > 0.0).map(|(m, &x)| (m, x as u64)).collect()).collect()
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Source {
    pub name: String,
    pub doc_ids: Vec<String>,
    pub matrix: SourceMatrix,
}

impl Source {
    pub fn new(name: impl Into<String>, matrix: SourceMatrix) -> Self {
        let doc_ids = (0..matrix.cols()).map(|i| format!("d{i}")).collect();
        Self { name: name.into(), doc_ids, matrix }
    }

    pub fn n_points(&self) -> usize {
        self.matrix.cols()
    }
}

/// Several sources sharing one row dictionary.
#[derive(Clone, Debug, PartialEq)]
pub struct SourceDataset {
    pub labels: Vec<String>,
    pub sources: Vec<Source>,
}

impl SourceDataset {
    pub fn new(labels: Vec<String>, sources: Vec<Source>) -> Result<Self> {
        for s in &sources {
            if s.matrix.rows() != labels.len() {
                return Err(Error::DimensionMismatch(format!(
                    "source {} has {} rows, dictionary has {}",
                    s.name,
                    s.matrix.rows(),
                    labels.len()
                )));
            }
            if s.doc_ids.len() != s.matrix.cols() {
                return Err(Error::DimensionMismatch(format!("source {} doc ids", s.name)));
            }
        }
        Ok(Self { labels, sources })
    }

    /// Dataset with generated row labels `t0, t1, ...`.
    pub fn from_matrices(matrices: Vec<SourceMatrix>) -> Result<Self> {
        let m = matrices.first().map_or(0, |x| x.rows());
        let labels = (0..m).map(|i| format!("t{i}")).collect();
        let sources = matrices.into_iter().enumerate().map(|(j, x)| Source::new(format!("source{j}"), x)).collect();
        Self::new(labels, sources)
    }

    pub fn n_features(&self) -> usize {
        self.labels.len()
    }

    pub fn n_sources(&self) -> usize {
        self.sources.len()
    }

    pub fn n_points(&self) -> Vec<usize> {
        self.sources.iter().map(Source::n_points).collect()
    }

    pub fn matrix(&self, j: usize) -> &SourceMatrix {
        &self.sources[j].matrix
    }

    pub fn check_mode(&self, mode: DataMode) -> Result<()> {
        if mode == DataMode::Counts {
            for s in &self.sources {
                if !s.matrix.is_count_valued() {
                    return Err(Error::Format(format!("source {} has non-integer counts", s.name)));
                }
            }
        } else if self.sources.iter().any(|s| s.matrix.as_slice().iter().any(|x| !x.is_finite())) {
            return Err(Error::Format("non-finite values".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn column_major_layout() {
        let x = SourceMatrix::from_column_major(2, 3, vec![1., 2., 3., 4., 5., 6.]).unwrap();
        assert_eq!(x.get(1, 0), 2.0);
        assert_eq!(x.column(2), &[5.0, 6.0]);
        assert_eq!(x.select_columns(&[2, 0]).as_slice(), &[5., 6., 1., 2.]);
    }

    #[test]
    fn sparse_counts_skip_zeros() {
        let x = SourceMatrix::from_column_major(3, 1, vec![0., 4., 1.]).unwrap();
        assert_eq!(x.sparse_counts(), vec![vec![(1, 4), (2, 1)]]);
    }

    #[test]
    fn dataset_rejects_row_mismatch() {
        let s = Source::new("a", SourceMatrix::zeros(2, 1));
        assert!(SourceDataset::new(vec!["x".into()], vec![s]).is_err());
    }

    #[test]
    fn count_mode_rejects_fractions() {
        let d = SourceDataset::from_matrices(vec![SourceMatrix::from_column_major(1, 1, vec![0.5]).unwrap()]).unwrap();
        assert!(d.check_mode(DataMode::Counts).is_err());
        assert!(d.check_mode(DataMode::Reals).is_ok());
    }
}
