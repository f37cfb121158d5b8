//! Synthetic multi-source data with known binary factors, some owned by a
//! single source and some shared by all.

use serde::{Deserialize, Serialize};

use crate::data::{DataMode, Source, SourceDataset, SourceMatrix};
use crate::dist::rng::{gamma, normal, poisson, uniform};
use crate::dist::RngStream;
use crate::error::{invalid, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSpec {
    pub n_features: usize,
    pub n_sources: usize,
    /// Factors used by exactly one source, per source.
    pub exclusive: usize,
    /// Factors available to every source.
    pub shared: usize,
    /// Data points per source; a single value is broadcast.
    pub n_points: Vec<usize>,
    pub weight_shape: f64,
    pub weight_rate: f64,
    /// Poisson background rate, or Gaussian noise standard deviation.
    pub noise: f64,
    /// Probability that a data point uses one of its source's factors.
    pub z_density: f64,
    /// Probability that a factor entry is one.
    pub factor_density: f64,
    pub mode: DataMode,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_features: 100,
            n_sources: 2,
            exclusive: 4,
            shared: 4,
            n_points: vec![100],
            weight_shape: 1.0,
            weight_rate: 0.5,
            noise: 0.1,
            z_density: 0.5,
            factor_density: 0.2,
            mode: DataMode::Counts,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn true_k(&self) -> usize {
        self.n_sources * self.exclusive + self.shared
    }

    pub fn points_per_source(&self) -> Vec<usize> {
        match self.n_points.as_slice() {
            [n] => vec![*n; self.n_sources],
            ns => ns.to_vec(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let prob = |p: f64| (0.0..=1.0).contains(&p);
        if self.n_features == 0 || self.n_sources == 0 {
            return invalid("need at least one feature and one source");
        }
        if self.n_points.len() != 1 && self.n_points.len() != self.n_sources {
            return invalid(format!("{} point counts for {} sources", self.n_points.len(), self.n_sources));
        }
        if !(self.weight_shape > 0.0 && self.weight_rate > 0.0 && self.weight_shape.is_finite() && self.weight_rate.is_finite()) {
            return invalid("weight shape and rate must be positive");
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return invalid("noise must be nonnegative");
        }
        if !prob(self.z_density) || !prob(self.factor_density) || self.factor_density == 0.0 {
            return invalid("densities must lie in [0, 1] and factor density must be positive");
        }
        Ok(())
    }

    /// Source allowed to use factor `k`, or `None` for shared factors.
    /// Exclusive factors come first, grouped by source.
    pub fn owner(&self, k: usize) -> Option<usize> {
        (k < self.n_sources * self.exclusive).then(|| k / self.exclusive)
    }
}

/// Generating parameters, for scoring recovered factors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthTruth {
    /// `phi[k][m]`, binary.
    pub phi: Vec<Vec<f64>>,
    /// `z[j][i][k]`.
    pub z: Vec<Vec<Vec<bool>>>,
    /// `w[j][i][k]`; entries with `z = 0` are still drawn.
    pub w: Vec<Vec<Vec<f64>>>,
    pub owner: Vec<Option<usize>>,
}

impl SynthTruth {
    /// `H_j = Z_j ⊙ W_j` as rows of length `K`.
    pub fn coefficients(&self, j: usize) -> Vec<Vec<f64>> {
        self.z[j].iter().zip(&self.w[j]).map(|(z, w)| z.iter().zip(w).map(|(&on, &x)| if on { x } else { 0.0 }).collect()).collect()
    }
}

pub fn synth_generate(spec: &SynthSpec) -> Result<(SourceDataset, SynthTruth)> {
    spec.validate()?;
    let mut rng = RngStream::new(spec.seed, 0);
    let (m, k_true) = (spec.n_features, spec.true_k());

    let mut phi = Vec::with_capacity(k_true);
    for _ in 0..k_true {
        loop {
            let col: Vec<f64> = (0..m).map(|_| f64::from(u8::from(uniform(&mut rng) < spec.factor_density))).collect();
            if col.iter().any(|&x| x > 0.0) {
                phi.push(col);
                break;
            }
        }
    }
    let owner: Vec<Option<usize>> = (0..k_true).map(|k| spec.owner(k)).collect();

    let mut truth = SynthTruth { phi, z: Vec::new(), w: Vec::new(), owner };
    let mut sources = Vec::with_capacity(spec.n_sources);
    for (j, &n) in spec.points_per_source().iter().enumerate() {
        let mut x = SourceMatrix::zeros(m, n);
        let (mut zj, mut wj) = (Vec::with_capacity(n), Vec::with_capacity(n));
        for i in 0..n {
            let mut z = vec![false; k_true];
            let mut w = vec![0.0; k_true];
            for k in 0..k_true {
                let allowed = truth.owner[k].is_none_or(|o| o == j);
                z[k] = allowed && uniform(&mut rng) < spec.z_density;
                w[k] = gamma(&mut rng, spec.weight_shape, spec.weight_rate)?;
            }
            for row in 0..m {
                let mean: f64 = (0..k_true).filter(|&k| z[k]).map(|k| truth.phi[k][row] * w[k]).sum();
                let v = match spec.mode {
                    DataMode::Counts => poisson(&mut rng, mean + spec.noise)? as f64,
                    DataMode::Reals => mean + if spec.noise > 0.0 { normal(&mut rng, 0.0, spec.noise) } else { 0.0 },
                };
                x.set(row, i, v);
            }
            zj.push(z);
            wj.push(w);
        }
        truth.z.push(zj);
        truth.w.push(wj);
        sources.push(Source::new(format!("source{j}"), x));
    }
    let labels = (0..m).map(|r| format!("f{r:03}")).collect();
    Ok((SourceDataset::new(labels, sources)?, truth))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_shapes() {
        let spec = SynthSpec::default();
        let (data, truth) = synth_generate(&spec).unwrap();
        assert_eq!(spec.true_k(), 12);
        assert_eq!(data.n_sources(), 2);
        assert_eq!((data.matrix(0).rows(), data.matrix(0).cols()), (100, 100));
        assert_eq!(truth.phi.len(), 12);
        data.check_mode(DataMode::Counts).unwrap();
    }

    #[test]
    fn exclusive_factors_stay_in_their_source() {
        let (_, truth) = synth_generate(&SynthSpec::default()).unwrap();
        for j in 0..2 {
            for z in &truth.z[j] {
                for (k, &on) in z.iter().enumerate() {
                    if on {
                        assert!(truth.owner[k].is_none_or(|o| o == j));
                    }
                }
            }
        }
    }

    #[test]
    fn silent_model_gives_zero_data() {
        let spec = SynthSpec { noise: 0.0, z_density: 0.0, ..SynthSpec::default() };
        let (data, _) = synth_generate(&spec).unwrap();
        assert!(data.sources.iter().all(|s| s.matrix.sum() == 0.0));
    }

    #[test]
    fn weights_have_mean_two() {
        let (_, truth) = synth_generate(&SynthSpec::default()).unwrap();
        let ws: Vec<f64> = truth.w.iter().flatten().flatten().copied().collect();
        let n = ws.len() as f64;
        let mean = ws.iter().sum::<f64>() / n;
        let sd = (ws.iter().map(|w| (w - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!((mean - 2.0).abs() < 3.0 * sd / n.sqrt(), "mean {mean}");
    }

    #[test]
    fn fixed_seed_is_deterministic() {
        let spec = SynthSpec { seed: 7, ..SynthSpec::default() };
        assert_eq!(synth_generate(&spec).unwrap(), synth_generate(&spec).unwrap());
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(synth_generate(&SynthSpec { n_points: vec![1, 2, 3], ..SynthSpec::default() }).is_err());
        assert!(synth_generate(&SynthSpec { z_density: 1.5, ..SynthSpec::default() }).is_err());
        assert!(synth_generate(&SynthSpec { weight_rate: 0.0, ..SynthSpec::default() }).is_err());
    }
}
