use nhfa::data::DataMode;
use nhfa::dist::RngStream;
use nhfa::engine::{
    heldout_infer, log_mean_exp, predictive_log_likelihood, run_chain, snapshot_from_json, snapshot_to_json, ModelKind, PredictiveConfig,
    Sampler, SweepConfig,
};
use nhfa::eval::{synth_generate, SynthSpec};
use nhfa::{Priors, SourceDataset};

fn small(mode: DataMode, seed: u64) -> SourceDataset {
    let spec = SynthSpec { n_features: 20, exclusive: 1, shared: 2, n_points: vec![15], mode, seed, ..SynthSpec::default() };
    synth_generate(&spec).unwrap().0
}

fn config(kind: ModelKind, iterations: usize) -> SweepConfig {
    SweepConfig { iterations, burn_in: 0, thinning: 1, seed: 3, kind, ..SweepConfig::default() }
}

#[test]
fn identical_seeds_give_identical_chains() {
    for (kind, mode) in [(ModelKind::Pgm, DataMode::Counts), (ModelKind::Ggm, DataMode::Reals)] {
        let data = small(mode, 1);
        let a = run_chain(&data, config(kind, 15), Priors::default()).unwrap();
        let b = run_chain(&data, config(kind, 15), Priors::default()).unwrap();
        assert_eq!(a.trace, b.trace);
        assert_eq!(a.last, b.last);
        let c = run_chain(&data, SweepConfig { seed: 4, ..config(kind, 15) }, Priors::default()).unwrap();
        assert_ne!(a.trace, c.trace);
    }
}

#[test]
fn snapshot_count_follows_burn_in_and_thinning() {
    let data = small(DataMode::Counts, 2);
    let out = run_chain(&data, SweepConfig { thinning: 5, ..config(ModelKind::Pgm, 10) }, Priors::default()).unwrap();
    assert_eq!(out.snapshots.len(), 2);
    assert_eq!(out.snapshots.iter().map(|s| s.iteration).collect::<Vec<_>>(), vec![5, 10]);
    assert_eq!(out.trace.len(), 10);
    let out = run_chain(&data, SweepConfig { burn_in: 4, thinning: 3, ..config(ModelKind::Pgm, 10) }, Priors::default()).unwrap();
    assert_eq!(out.snapshots.iter().map(|s| s.iteration).collect::<Vec<_>>(), vec![7, 10]);
}

#[test]
fn snapshot_json_round_trips() {
    for (kind, mode) in [(ModelKind::Pgm, DataMode::Counts), (ModelKind::Ggm, DataMode::Reals)] {
        let data = small(mode, 5);
        let out = run_chain(&data, config(kind, 8), Priors::default()).unwrap();
        let text = snapshot_to_json(&out.last, 3).unwrap();
        let (back, seed) = snapshot_from_json(&text).unwrap();
        assert_eq!(seed, 3);
        assert_eq!(back.sticks, out.last.sticks);
        assert_eq!(back.params, out.last.params);
        assert_eq!(back.assign, out.last.assign);
        assert_eq!(snapshot_to_json(&back, 3).unwrap(), text);
    }
}

#[test]
fn snapshot_rejects_bad_input() {
    assert!(snapshot_from_json("{}").is_err());
    assert!(snapshot_from_json("not json").is_err());
}

#[test]
fn resuming_from_a_snapshot_reproduces_the_chain() {
    for (kind, mode) in [(ModelKind::Pgm, DataMode::Counts), (ModelKind::Ggm, DataMode::Reals)] {
        let data = small(mode, 6);
        let full = run_chain(&data, config(kind, 12), Priors::default()).unwrap();

        let half = run_chain(&data, config(kind, 6), Priors::default()).unwrap();
        let (mut state, _) = snapshot_from_json(&snapshot_to_json(&half.last, 3).unwrap()).unwrap();
        let sampler = Sampler::new(&data, config(kind, 12), Priors::default()).unwrap();
        let mut tail = Vec::new();
        sampler
            .run_from(&mut state, |_, _, rec| {
                tail.push(rec.clone());
                Ok(())
            })
            .unwrap();
        assert_eq!(&full.trace[6..], &tail[..]);
        assert_eq!(snapshot_to_json(&state, 3).unwrap(), snapshot_to_json(&full.last, 3).unwrap());
    }
}

#[test]
fn frozen_sweeps_leave_factors_and_sticks_untouched() {
    for (kind, mode) in [(ModelKind::Pgm, DataMode::Counts), (ModelKind::Ggm, DataMode::Reals)] {
        let data = small(mode, 7);
        let trained = run_chain(&data, config(kind, 10), Priors::default()).unwrap().last;
        let frozen = SweepConfig { freeze: true, ..config(kind, 10) };
        let sampler = Sampler::new(&data, frozen, Priors::default()).unwrap();
        let mut state = trained.clone();
        for t in 1..=10 {
            sampler.sweep(&mut state, &mut RngStream::new(9, t)).unwrap();
        }
        assert_eq!(state.params.phi(), trained.params.phi());
        assert_eq!(state.sticks.betas, trained.sticks.betas);
    }
}

#[test]
fn sweeps_keep_invariants_and_conserve_counts() {
    let data = small(DataMode::Counts, 8);
    let sampler = Sampler::new(&data, config(ModelKind::Pgm, 30), Priors::default()).unwrap();
    let mut state = sampler.init_state(&mut RngStream::new(3, 0)).unwrap();
    for t in 1..=30 {
        let report = sampler.sweep(&mut state, &mut sampler.sweep_rng(t)).unwrap();
        let dec = report.decomposition.expect("Poisson sweeps decompose counts");
        dec.verify().unwrap();
        state.check_invariants().unwrap();
    }
}

#[test]
fn single_pair_predictive_is_that_pairs_likelihood() {
    let data = small(DataMode::Counts, 9);
    let out = run_chain(&data, SweepConfig { thinning: 10, ..config(ModelKind::Pgm, 10) }, Priors::default()).unwrap();
    assert_eq!(out.snapshots.len(), 1);
    let test = small(DataMode::Counts, 10);
    let pc = PredictiveConfig { samples: 1, burn_in: 2, seed: 1, ..PredictiveConfig::default() };
    let samples = heldout_infer(&test, &out.snapshots, &pc).unwrap();
    assert_eq!(samples.len(), 1);
    let r = predictive_log_likelihood(&test, &samples);
    assert_eq!(r.pairs.len(), 1);
    assert_eq!(r.log_likelihood, r.pairs[0].1);
    assert!(r.log_likelihood.is_finite());
}

#[test]
fn predictive_is_unchanged_by_duplicating_every_draw() {
    let data = small(DataMode::Counts, 11);
    let out = run_chain(&data, SweepConfig { thinning: 2, ..config(ModelKind::Pgm, 6) }, Priors::default()).unwrap();
    let test = small(DataMode::Counts, 12);
    let pc = PredictiveConfig { samples: 3, burn_in: 2, seed: 2, ..PredictiveConfig::default() };
    let samples = heldout_infer(&test, &out.snapshots, &pc).unwrap();
    assert_eq!(samples.len(), out.snapshots.len() * 3);
    let once = predictive_log_likelihood(&test, &samples);
    let doubled: Vec<_> = samples.iter().chain(&samples).cloned().collect();
    let twice = predictive_log_likelihood(&test, &doubled);
    assert!((once.log_likelihood - twice.log_likelihood).abs() < 1e-9);
}

#[test]
fn log_mean_exp_matches_the_linear_domain() {
    let xs = [-1.0, -2.5, 0.3, -0.7];
    let linear = (xs.iter().map(|x: &f64| x.exp()).sum::<f64>() / xs.len() as f64).ln();
    assert!((log_mean_exp(&xs) - linear).abs() < 1e-10);
    // Shifted far below underflow the answer moves by the shift exactly.
    let shifted: Vec<f64> = xs.iter().map(|x| x - 2000.0).collect();
    assert!((log_mean_exp(&shifted) - (linear - 2000.0)).abs() < 1e-9);
    assert_eq!(log_mean_exp::<f64>(&[]), f64::NEG_INFINITY);
}

#[test]
fn heldout_rejects_mismatched_dictionaries() {
    let data = small(DataMode::Counts, 13);
    let out = run_chain(&data, SweepConfig { thinning: 4, ..config(ModelKind::Pgm, 4) }, Priors::default()).unwrap();
    let other = synth_generate(&SynthSpec { n_features: 7, exclusive: 1, shared: 1, n_points: vec![3], ..SynthSpec::default() }).unwrap().0;
    assert!(heldout_infer(&other, &out.snapshots, &PredictiveConfig::default()).is_err());
    assert!(heldout_infer(&data, &[], &PredictiveConfig::default()).is_err());
}

#[test]
fn config_validation() {
    assert!(SweepConfig { thinning: 0, ..SweepConfig::default() }.validate().is_err());
    assert!(SweepConfig { iterations: 10, burn_in: 10, ..SweepConfig::default() }.validate().is_err());
    assert!(SweepConfig::default().validate().is_ok());
    let bad: Result<SweepConfig, _> = serde_json::from_str(r#"{"iterations": 5, "bogus": 1}"#);
    assert!(bad.is_err());
}
