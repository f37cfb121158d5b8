//! Fits the Poisson model to the default synthetic data and reports how the
//! number of active factors evolves and how well the factors are recovered.
//!
//! cargo run --release -p nhfa-core --example synthetic_recovery -- [seed] [fixed]

use nhfa::engine::{run_chain, SweepConfig};
use nhfa::eval::metrics::threshold_factor;
use nhfa::eval::{match_factors, synth_generate, SynthSpec};
use nhfa::Priors;

fn main() -> nhfa::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let (data, truth) = synth_generate(&SynthSpec { seed, ..SynthSpec::default() })?;
    let resample = std::env::args().nth(2).map_or(true, |s| s != "fixed");
    let config =
        SweepConfig { iterations: 500, burn_in: 250, thinning: 10, seed, resample_hyper_scales: resample, ..SweepConfig::default() };
    let started = std::time::Instant::now();
    let out = run_chain(&data, config, Priors::default())?;
    for r in out.trace.iter().filter(|r| r.iteration % 25 == 0 || r.iteration <= 10) {
        println!("sweep {:>3}  active K {:>2}  K† {:>2}  log joint {:.1}", r.iteration, r.active_k, r.k_dagger, r.log_joint);
    }
    let first12 = out.trace.iter().find(|r| r.active_k == 12).map(|r| r.iteration);
    println!("first reached 12 at {first12:?}; {:.1} s", started.elapsed().as_secs_f64());
    let est: Vec<Vec<f64>> = out.last.params.phi().iter().map(|c| threshold_factor(c, 0.5)).collect();
    println!("mean F1 (last state) {:.3}", match_factors(&est, &truth.phi).mean_f1);
    Ok(())
}
