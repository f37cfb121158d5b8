//! Self-describing JSON snapshots. Dense arrays are stored row-major as
//! base64 of little-endian `f64`, so a round trip is bit-exact.

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::likelihood::{GgmHyper, GgmParams, PgmHyper, PgmParams};
use crate::rhbp::{Assignments, AuxState, Concentrations, SourceAssignments, StickState};

use super::state::{ModelKind, ModelState, Params};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseArray {
    pub shape: [usize; 2],
    pub data: String,
}

impl DenseArray {
    /// From column-major storage `cols[c][r]`, written row-major.
    pub fn from_columns(rows: usize, cols: &[Vec<f64>]) -> Self {
        let mut bytes = Vec::with_capacity(rows * cols.len() * 8);
        for r in 0..rows {
            for c in cols {
                bytes.extend_from_slice(&c[r].to_le_bytes());
            }
        }
        Self { shape: [rows, cols.len()], data: STANDARD.encode(bytes) }
    }

    pub fn to_columns(&self) -> Result<Vec<Vec<f64>>> {
        let [rows, ncols] = self.shape;
        let bytes = STANDARD.decode(&self.data).map_err(|e| Error::Format(format!("bad base64 array: {e}")))?;
        if bytes.len() != rows * ncols * 8 {
            return Err(Error::Format(format!("array payload of {} bytes for shape {rows}×{ncols}", bytes.len())));
        }
        let mut cols = vec![Vec::with_capacity(rows); ncols];
        for (idx, chunk) in bytes.chunks_exact(8).enumerate() {
            cols[idx % ncols.max(1)].push(f64::from_le_bytes(chunk.try_into().expect("8-byte chunk")));
        }
        Ok(cols)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum ModelBlock {
    Pgm { lambda: Vec<f64>, hyper: PgmHyper },
    Ggm { var_phi: f64, var_w: Vec<f64>, var_noise: Vec<f64>, hyper: GgmHyper },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SnapshotFile {
    format_version: u32,
    model_kind: ModelKind,
    seed: u64,
    iteration: u64,
    tau0: f64,
    rho: f64,
    k_dagger: usize,
    betas: Vec<f64>,
    alpha: Vec<f64>,
    alpha_prior: (f64, f64),
    n_points: Vec<usize>,
    /// Per source, per data point: indices of active columns.
    z: Vec<Vec<Vec<usize>>>,
    n_features: usize,
    /// `M × K†`.
    phi: DenseArray,
    /// Per source, `N_j × K†`.
    w: Vec<DenseArray>,
    model: ModelBlock,
}

pub fn snapshot_to_json(state: &ModelState, seed: u64) -> Result<String> {
    let m = state.params.phi().first().map_or(0, Vec::len);
    let model = match &state.params {
        Params::Pgm(p) => ModelBlock::Pgm { lambda: p.lambda.clone(), hyper: p.hyper.clone() },
        Params::Ggm(p) => {
            ModelBlock::Ggm { var_phi: p.var_phi, var_w: p.var_w.clone(), var_noise: p.var_noise.clone(), hyper: p.hyper.clone() }
        }
    };
    let file = SnapshotFile {
        format_version: FORMAT_VERSION,
        model_kind: state.kind(),
        seed,
        iteration: state.iteration,
        tau0: state.sticks.tau0,
        rho: state.sticks.rho,
        k_dagger: state.k_dagger(),
        betas: state.sticks.betas.clone(),
        alpha: state.conc.alpha.clone(),
        alpha_prior: (state.conc.prior_shape, state.conc.prior_rate),
        n_points: state.assign.sources.iter().map(SourceAssignments::n_points).collect(),
        z: state.assign.sources.iter().map(SourceAssignments::rows).collect(),
        n_features: m,
        phi: DenseArray::from_columns(m, state.params.phi()),
        w: state.params.w().iter().zip(&state.assign.sources).map(|(w, z)| DenseArray::from_columns(z.n_points(), w)).collect(),
        model,
    };
    Ok(serde_json::to_string_pretty(&file)?)
}

/// Returns the state and the seed it was recorded with.
pub fn snapshot_from_json(text: &str) -> Result<(ModelState, u64)> {
    let f: SnapshotFile = serde_json::from_str(text)?;
    if f.format_version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported snapshot format {}", f.format_version)));
    }
    let kd = f.k_dagger;
    if f.betas.len() != kd || f.phi.shape != [f.n_features, kd] {
        return Err(Error::Format("snapshot dimensions disagree with K†".into()));
    }
    let mut sticks = StickState::new(f.betas, f.tau0)?;
    sticks.rho = f.rho;
    let sources = f.n_points.iter().zip(&f.z).map(|(&n, rows)| SourceAssignments::from_rows(n, kd, rows)).collect::<Result<Vec<_>>>()?;
    let phi = f.phi.to_columns()?;
    let mut w = Vec::with_capacity(f.w.len());
    for (arr, &n) in f.w.iter().zip(&f.n_points) {
        if arr.shape != [n, kd] {
            return Err(Error::Format("W shape disagrees with the assignments".into()));
        }
        w.push(arr.to_columns()?);
    }
    let params = match (f.model_kind, f.model) {
        (ModelKind::Pgm, ModelBlock::Pgm { lambda, hyper }) => Params::Pgm(PgmParams { phi, w, lambda, hyper }),
        (ModelKind::Ggm, ModelBlock::Ggm { var_phi, var_w, var_noise, hyper }) => {
            Params::Ggm(GgmParams { phi, w, var_phi, var_w, var_noise, hyper })
        }
        _ => return Err(Error::Format("model block does not match model_kind".into())),
    };
    let state = ModelState {
        sticks,
        assign: Assignments { sources },
        conc: Concentrations::new(f.alpha, f.alpha_prior.0, f.alpha_prior.1)?,
        params,
        aux: AuxState::default(),
        iteration: f.iteration,
    };
    state.check_invariants()?;
    Ok((state, f.seed))
}
