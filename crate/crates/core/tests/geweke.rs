use nhfa::engine::{geweke_check, GewekeConfig, ModelKind};
use nhfa::rhbp::Mutation;

fn max_abs_z(kind: ModelKind, samples: usize, seed: u64, mutation: Mutation) -> f64 {
    let mut cfg = GewekeConfig::tiny(kind, samples, seed);
    cfg.mutation = mutation;
    let stats = geweke_check(&cfg).unwrap();
    for s in &stats {
        eprintln!("{kind} {mutation:?} {:>10} fwd {:.4} chain {:.4} z {:+.2}", s.name, s.forward_mean, s.chain_mean, s.z);
    }
    stats.iter().map(|s| s.z.abs()).fold(0.0, f64::max)
}

#[test]
fn poisson_model_passes_joint_distribution_test() {
    assert!(max_abs_z(ModelKind::Pgm, 4000, 11, Mutation::None) < 4.0);
}

#[test]
fn gaussian_model_passes_joint_distribution_test() {
    assert!(max_abs_z(ModelKind::Ggm, 4000, 12, Mutation::None) < 4.0);
}

#[test]
fn stirling_off_by_one_is_detected() {
    assert!(max_abs_z(ModelKind::Pgm, 10_000, 13, Mutation::StirlingOffByOne) > 6.0);
}
