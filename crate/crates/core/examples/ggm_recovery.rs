//! Noiseless low-rank Gaussian data: how closely the posterior-mean
//! reconstruction matches the data.
//!
//! cargo run --release -p nhfa-core --example ggm_recovery -- [seed]

use nhfa::data::DataMode;
use nhfa::engine::{run_chain, ModelKind, Params, SweepConfig};
use nhfa::eval::{synth_generate, SynthSpec};
use nhfa::Priors;

fn main() -> nhfa::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let spec = SynthSpec {
        n_features: 30,
        n_sources: 1,
        exclusive: 3,
        shared: 0,
        n_points: vec![60],
        noise: 0.0,
        mode: DataMode::Reals,
        seed,
        ..SynthSpec::default()
    };
    let (data, _) = synth_generate(&spec)?;
    let config = SweepConfig { iterations: 200, burn_in: 100, thinning: 1, seed, kind: ModelKind::Ggm, ..SweepConfig::default() };
    let out = run_chain(&data, config, Priors::default())?;
    for r in out.trace.iter().filter(|r| r.iteration % 20 == 0) {
        println!("sweep {:>3} K {:>2} noise {:?}", r.iteration, r.active_k, r.noise_var);
    }
    let x = data.matrix(0);
    let mut mean = vec![0.0; x.rows() * x.cols()];
    for s in &out.snapshots {
        let Params::Ggm(p) = &s.params else { unreachable!() };
        for i in 0..x.cols() {
            for (m, v) in p.mean(0, i, &s.assign.sources[0]).into_iter().enumerate() {
                mean[i * x.rows() + m] += v / out.snapshots.len() as f64;
            }
        }
    }
    let err: f64 = mean.iter().zip(x.as_slice()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let norm: f64 = x.as_slice().iter().map(|v| v * v).sum::<f64>().sqrt();
    println!("relative error {:.2e}", err / norm);
    Ok(())
}
