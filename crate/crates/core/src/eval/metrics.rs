//! Held-out perplexity, least-squares coefficients, cosine retrieval scores
//! and factor recovery scores.

use nalgebra::DMatrix;
use pathfinding::prelude::{kuhn_munkres, Matrix};
use serde::{Deserialize, Serialize};

use crate::data::SourceMatrix;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// `exp(-log p / Ñ)`.
pub fn perplexity_per_doc<T: Scalar>(log_p: T, n_docs: usize) -> T {
    (-log_p / T::of_usize(n_docs.max(1))).exp()
}

/// Singular values below this fraction of the largest are treated as zero
/// when solving for coefficients.
pub const COEFFICIENT_RCOND: f64 = 1e-8;

/// Minimum-norm least-squares `H̃ = argmin ‖X̃ − Φ H̃ᵀ‖²`, one row of length
/// `K` per data point; `phi[k]` is factor `k`. Rank-deficient factor sets
/// are regularized by truncating tiny singular values.
pub fn infer_test_coefficients(x: &SourceMatrix, phi: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let (m, k) = (x.rows(), phi.len());
    if phi.iter().any(|c| c.len() != m) {
        return Err(Error::DimensionMismatch(format!("factors do not have {m} rows")));
    }
    if k == 0 {
        return Ok(vec![Vec::new(); x.cols()]);
    }
    let f = DMatrix::from_fn(m, k, |r, c| phi[c][r]);
    let svd = f.svd(true, true);
    let smax = svd.singular_values.max();
    let rhs = DMatrix::from_column_slice(m, x.cols(), x.as_slice());
    let h = svd.solve(&rhs, COEFFICIENT_RCOND * smax).map_err(|e| Error::Degenerate(format!("coefficient solve failed: {e}")))?;
    Ok((0..x.cols()).map(|i| h.column(i).iter().copied().collect()).collect())
}

/// Cosine similarity; zero vectors score 0.
pub fn cosine<T: Scalar>(a: &[T], b: &[T]) -> T {
    let dot: T = a.iter().zip(b).map(|(&x, &y)| x * y).sum();
    let na: T = a.iter().map(|&x| x * x).sum::<T>().sqrt();
    let nb: T = b.iter().map(|&x| x * x).sum::<T>().sqrt();
    if na == T::zero() || nb == T::zero() {
        T::zero()
    } else {
        dot / (na * nb)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetrievalGroundTruth {
    pub query_labels: Vec<String>,
    pub train_labels: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetrievalReport {
    /// `(N, mean precision@N)`.
    pub precision_at: Vec<(usize, f64)>,
    pub map: f64,
    pub average_precision: Vec<f64>,
}

/// Training indices sorted by decreasing similarity, ties by index.
pub fn rank_by_cosine(query: &[f64], train: &[Vec<f64>]) -> Vec<usize> {
    let sims: Vec<f64> = train.iter().map(|t| cosine(query, t)).collect();
    let mut order: Vec<usize> = (0..train.len()).collect();
    order.sort_by(|&a, &b| sims[b].total_cmp(&sims[a]).then(a.cmp(&b)));
    order
}

pub fn precision_at(relevant: &[bool], n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    relevant.iter().take(n).filter(|&&r| r).count() as f64 / n as f64
}

/// Mean of precision at each relevant rank, over all relevant items; 0 when
/// nothing is relevant.
pub fn average_precision(relevant: &[bool]) -> f64 {
    let total = relevant.iter().filter(|&&r| r).count();
    if total == 0 {
        return 0.0;
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank, _) in relevant.iter().enumerate().filter(|(_, &r)| r) {
        hits += 1;
        sum += hits as f64 / (rank + 1) as f64;
    }
    sum / total as f64
}

pub fn retrieval_eval(queries: &[Vec<f64>], train: &[Vec<f64>], truth: &RetrievalGroundTruth, n_list: &[usize]) -> Result<RetrievalReport> {
    if queries.len() != truth.query_labels.len() || train.len() != truth.train_labels.len() {
        return Err(Error::DimensionMismatch("labels do not match coefficient rows".into()));
    }
    let mut prec = vec![0.0; n_list.len()];
    let mut aps = Vec::with_capacity(queries.len());
    for (q, label) in queries.iter().zip(&truth.query_labels) {
        let relevant: Vec<bool> = rank_by_cosine(q, train).into_iter().map(|t| &truth.train_labels[t] == label).collect();
        for (p, &n) in prec.iter_mut().zip(n_list) {
            *p += precision_at(&relevant, n);
        }
        aps.push(average_precision(&relevant));
    }
    let nq = queries.len().max(1) as f64;
    Ok(RetrievalReport {
        precision_at: n_list.iter().copied().zip(prec.into_iter().map(|p| p / nq)).collect(),
        map: aps.iter().sum::<f64>() / nq,
        average_precision: aps,
    })
}

/// F1 of two binary vectors (entries > 0.5 count as one).
pub fn binary_f1(est: &[f64], truth: &[f64]) -> f64 {
    let (mut tp, mut fp, mut fneg) = (0usize, 0usize, 0usize);
    for (&e, &t) in est.iter().zip(truth) {
        match (e > 0.5, t > 0.5) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fneg += 1,
            _ => {}
        }
    }
    if tp == 0 {
        0.0
    } else {
        2.0 * tp as f64 / (2 * tp + fp + fneg) as f64
    }
}

/// Binarizes a factor: entries above `relative` times its largest entry.
pub fn threshold_factor(col: &[f64], relative: f64) -> Vec<f64> {
    let max = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    col.iter().map(|&x| f64::from(u8::from(max > 0.0 && x > relative * max))).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FactorMatch {
    /// For each true factor, the matched estimate (if any) and its F1.
    pub matches: Vec<(Option<usize>, f64)>,
    pub mean_f1: f64,
}

/// One-to-one matching of binary estimates to true factors maximizing total
/// F1; unmatched true factors score 0.
pub fn match_factors(est: &[Vec<f64>], truth: &[Vec<f64>]) -> FactorMatch {
    const SCALE: f64 = 1e9;
    if truth.is_empty() {
        return FactorMatch { matches: Vec::new(), mean_f1: 1.0 };
    }
    if est.is_empty() {
        return FactorMatch { matches: vec![(None, 0.0); truth.len()], mean_f1: 0.0 };
    }
    let f1 = |e: usize, t: usize| binary_f1(&est[e], &truth[t]);
    let mut matches = vec![(None, 0.0); truth.len()];
    // kuhn_munkres needs rows ≤ columns
    if truth.len() <= est.len() {
        let w = Matrix::from_fn(truth.len(), est.len(), |(t, e)| (f1(e, t) * SCALE).round() as i64);
        let (_, assign) = kuhn_munkres(&w);
        for (t, &e) in assign.iter().enumerate() {
            matches[t] = (Some(e), f1(e, t));
        }
    } else {
        let w = Matrix::from_fn(est.len(), truth.len(), |(e, t)| (f1(e, t) * SCALE).round() as i64);
        let (_, assign) = kuhn_munkres(&w);
        for (e, &t) in assign.iter().enumerate() {
            matches[t] = (Some(e), f1(e, t));
        }
    }
    let mean_f1 = matches.iter().map(|m| m.1).sum::<f64>() / truth.len() as f64;
    FactorMatch { matches, mean_f1 }
}

/// Posterior mean of factor columns across stored states whose column
/// labels may differ. Each state's columns are matched one-to-one to the
/// reference (the last state) by maximal total cosine similarity, and every
/// reference column is averaged over the states that matched it.
pub fn posterior_mean_factors(states: &[Vec<Vec<f64>>]) -> Vec<Vec<f64>> {
    const SCALE: f64 = 1e9;
    let Some(reference) = states.last() else {
        return Vec::new();
    };
    let mut sums = reference.clone();
    let mut hits = vec![1usize; reference.len()];
    for cols in &states[..states.len() - 1] {
        if cols.is_empty() || reference.is_empty() {
            continue;
        }
        let sim = |r: usize, c: usize| (cosine(&reference[r], &cols[c]) * SCALE).round() as i64;
        let pairs: Vec<(usize, usize)> = if reference.len() <= cols.len() {
            let (_, a) = kuhn_munkres(&Matrix::from_fn(reference.len(), cols.len(), |(r, c)| sim(r, c)));
            a.into_iter().enumerate().collect()
        } else {
            let (_, a) = kuhn_munkres(&Matrix::from_fn(cols.len(), reference.len(), |(c, r)| sim(r, c)));
            a.into_iter().enumerate().map(|(c, r)| (r, c)).collect()
        };
        for (r, c) in pairs {
            for (s, x) in sums[r].iter_mut().zip(&cols[c]) {
                *s += x;
            }
            hits[r] += 1;
        }
    }
    for (col, n) in sums.iter_mut().zip(hits) {
        col.iter_mut().for_each(|x| *x /= n as f64);
    }
    sums
}

/// `‖A − B‖_F / ‖B‖_F` over two equally shaped matrices.
pub fn relative_frobenius_error(approx: &SourceMatrix, exact: &SourceMatrix) -> f64 {
    let num: f64 = approx.as_slice().iter().zip(exact.as_slice()).map(|(a, b)| (a - b) * (a - b)).sum();
    let den: f64 = exact.as_slice().iter().map(|b| b * b).sum();
    (num / den).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn posterior_mean_undoes_column_relabeling() {
        let a = vec![vec![1.0, 0.0, 0.0], vec![0.0, 2.0, 2.0]];
        let b = vec![vec![0.0, 4.0, 4.0], vec![3.0, 0.0, 0.0], vec![0.0, 0.0, 9.0]];
        let mean = posterior_mean_factors(&[b, a]);
        assert_eq!(mean, vec![vec![2.0, 0.0, 0.0], vec![0.0, 3.0, 3.0]]);
        assert!(posterior_mean_factors(&[]).is_empty());
    }

    #[test]
    fn perplexity_arithmetic() {
        assert!((perplexity_per_doc(-2.0, 2) - std::f64::consts::E).abs() < 1e-12);
        assert_eq!(perplexity_per_doc(0.0f64, 5), 1.0);
        assert!((perplexity_per_doc(-2.0f32, 2) - std::f32::consts::E).abs() < 1e-6);
    }

    #[test]
    fn exact_fit_has_tiny_residual() {
        let phi = vec![vec![1.0, 0.0, 2.0, 1.0], vec![0.0, 1.0, 1.0, 3.0]];
        let h = [[0.5, 2.0], [1.5, -1.0]];
        let cols: Vec<Vec<f64>> = h.iter().map(|r| (0..4).map(|m| phi[0][m] * r[0] + phi[1][m] * r[1]).collect()).collect();
        let x = SourceMatrix::from_columns(4, &cols).unwrap();
        let got = infer_test_coefficients(&x, &phi).unwrap();
        let mut res = 0.0;
        for (i, row) in got.iter().enumerate() {
            for m in 0..4 {
                res += (x.get(m, i) - phi[0][m] * row[0] - phi[1][m] * row[1]).powi(2);
            }
        }
        assert!(res.sqrt() <= 1e-8);
    }

    #[test]
    fn orthonormal_factors_project() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let phi = vec![vec![s, s, 0.0], vec![s, -s, 0.0]];
        let x = SourceMatrix::from_columns(3, &[vec![1.0, 2.0, 3.0]]).unwrap();
        let h = infer_test_coefficients(&x, &phi).unwrap();
        assert!((h[0][0] - 3.0 * s).abs() < 1e-7);
        assert!((h[0][1] + s).abs() < 1e-7);
    }

    #[test]
    fn cosine_basics() {
        assert!((cosine(&[1.0, 2.0], &[1.0, 2.0]) - 1.0f64).abs() < 1e-15);
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 2.0]), 0.0);
    }

    #[test]
    fn precision_and_ap_by_hand() {
        let rel = [true, false, true];
        assert!((precision_at(&rel, 3) - 2.0 / 3.0).abs() < 1e-15);
        assert!((average_precision(&rel) - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn ties_break_by_training_index() {
        assert_eq!(rank_by_cosine(&[1.0, 0.0], &[vec![0.0, 1.0], vec![2.0, 0.0], vec![1.0, 0.0]]), vec![1, 2, 0]);
    }

    #[test]
    fn perfectly_separated_labels_give_unit_map() {
        let train = vec![vec![1.0, 0.0], vec![0.9, 0.1], vec![0.0, 1.0], vec![0.1, 0.9]];
        let queries = vec![vec![1.0, 0.05], vec![0.05, 1.0]];
        let truth = RetrievalGroundTruth {
            query_labels: vec!["a".into(), "b".into()],
            train_labels: vec!["a".into(), "a".into(), "b".into(), "b".into()],
        };
        let r = retrieval_eval(&queries, &train, &truth, &[1, 2, 4]).unwrap();
        assert_eq!(r.map, 1.0);
        assert_eq!(r.precision_at, vec![(1, 1.0), (2, 1.0), (4, 0.5)]);
    }

    #[test]
    fn matching_recovers_permutation() {
        let truth = vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 1.0]];
        let est = vec![vec![0.0, 0.0, 1.0], vec![0.0, 1.0, 1.0], vec![1.0, 0.0, 0.0]];
        let m = match_factors(&est, &truth);
        assert_eq!(m.matches, vec![(Some(2), 1.0), (Some(1), 1.0)]);
        assert_eq!(m.mean_f1, 1.0);
        let few = match_factors(&est[..1], &truth);
        assert!((few.mean_f1 - (2.0 / 3.0) / 2.0).abs() < 1e-12);
    }
}
