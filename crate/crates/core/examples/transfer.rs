//! Does a data-rich auxiliary source lower held-out perplexity on a
//! data-poor target source? Compares joint and target-only training.
//!
//! cargo run --release -p nhfa-core --example transfer -- [repetitions]

use nhfa::data::{Source, SourceDataset};
use nhfa::engine::{heldout_infer, predictive_log_likelihood, run_chain, PredictiveConfig, SweepConfig};
use nhfa::eval::{perplexity_per_doc, synth_generate, SynthSpec};
use nhfa::Priors;

fn ppd(train: &SourceDataset, test: &SourceDataset, target: usize, seed: u64) -> nhfa::Result<f64> {
    let config = SweepConfig { iterations: 200, burn_in: 100, thinning: 10, seed, ..SweepConfig::default() };
    let out = run_chain(train, config, Priors::default())?;
    let pc = PredictiveConfig { train_source: target, seed, ..PredictiveConfig::default() };
    let samples = heldout_infer(test, &out.snapshots, &pc)?;
    let lp = predictive_log_likelihood(test, &samples);
    Ok(perplexity_per_doc(lp.log_likelihood, test.n_points()[0]))
}

fn main() -> nhfa::Result<()> {
    let reps = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(10);
    let mut wins = 0;
    for seed in 0..reps {
        let spec = SynthSpec { exclusive: 2, shared: 4, n_points: vec![100, 30], seed, ..SynthSpec::default() };
        let (data, _) = synth_generate(&spec)?;
        let target = &data.sources[1];
        let train_idx: Vec<usize> = (0..10).collect();
        let test_idx: Vec<usize> = (10..30).collect();
        let target_train = Source::new("target", target.matrix.select_columns(&train_idx));
        let test = SourceDataset::new(data.labels.clone(), vec![Source::new("test", target.matrix.select_columns(&test_idx))])?;
        let joint = SourceDataset::new(data.labels.clone(), vec![data.sources[0].clone(), target_train.clone()])?;
        let alone = SourceDataset::new(data.labels.clone(), vec![target_train])?;
        let a = ppd(&joint, &test, 1, seed)?;
        let b = ppd(&alone, &test, 0, seed)?;
        wins += usize::from(a < b);
        println!("seed {seed}: joint {a:.2} target-only {b:.2}");
    }
    println!("joint better in {wins}/{reps}");
    Ok(())
}
