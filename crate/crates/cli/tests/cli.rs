use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nhfa::engine::log_mean_exp;
use nhfa::eval::perplexity_per_doc;
use serde_json::Value;

fn nhfa(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nhfa")).args(args).current_dir(dir).env_remove("NHFA_SEED").output().unwrap()
}

fn ok(out: Output) -> Output {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn read(p: impl AsRef<Path>) -> String {
    std::fs::read_to_string(p).unwrap()
}

fn small_data(dir: &Path, name: &str, seed: &str, points: &str) {
    ok(nhfa(&["synth", "--out", name, "--seed", seed, "--features", "25", "--points", points], dir));
}

fn small_fit(dir: &Path, extra: &[&str]) -> PathBuf {
    small_data(dir, "data", "3", "15");
    let mut args = vec!["fit", "--data", "data/source_0.csv", "--data", "data/source_1.csv", "--out", "fit"];
    args.extend_from_slice(extra);
    ok(nhfa(&args, dir));
    dir.join("fit")
}

#[test]
fn synth_defaults_write_two_matrices_of_a_hundred_rows() {
    let tmp = tempfile::tempdir().unwrap();
    ok(nhfa(&["synth", "--out", "d"], tmp.path()));
    for j in 0..2 {
        let text = read(tmp.path().join(format!("d/source_{j}.csv")));
        assert_eq!(text.lines().count(), 1 + 100, "header plus one row per term");
        assert_eq!(text.lines().next().unwrap().split(',').count(), 1 + 100);
    }
    let truth: Value = serde_json::from_str(&read(tmp.path().join("d/truth.json"))).unwrap();
    assert_eq!(truth["phi"].as_array().unwrap().len(), 12);
}

#[test]
fn synth_is_reproducible_under_a_seed() {
    let tmp = tempfile::tempdir().unwrap();
    ok(nhfa(&["synth", "--out", "a", "--seed", "7"], tmp.path()));
    ok(nhfa(&["synth", "--out", "b", "--seed", "7"], tmp.path()));
    for f in ["source_0.csv", "source_1.csv", "truth.json", "spec.json"] {
        assert_eq!(read(tmp.path().join("a").join(f)), read(tmp.path().join("b").join(f)), "{f}");
    }
    ok(nhfa(&["synth", "--out", "c", "--seed", "8"], tmp.path()));
    assert_ne!(read(tmp.path().join("a/source_0.csv")), read(tmp.path().join("c/source_0.csv")));
}

#[test]
fn invalid_synth_specs_fail_without_partial_output() {
    let tmp = tempfile::tempdir().unwrap();
    let out = nhfa(&["synth", "--out", "bad", "--shared", "-1"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    std::fs::write(tmp.path().join("cfg.json"), r#"{"synth": {"shared": -1}, "out": "bad"}"#).unwrap();
    assert_eq!(nhfa(&["synth", "--config", "cfg.json"], tmp.path()).status.code(), Some(2));
    std::fs::write(tmp.path().join("cfg.json"), r#"{"synth": {"n_sources": 0}, "out": "bad"}"#).unwrap();
    assert_eq!(nhfa(&["synth", "--config", "cfg.json"], tmp.path()).status.code(), Some(2));
    assert!(!tmp.path().join("bad").exists());
}

#[test]
fn unknown_config_keys_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("cfg.json"), r#"{"out": "d", "colour": "blue"}"#).unwrap();
    let out = nhfa(&["synth", "--config", "cfg.json"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    std::fs::write(tmp.path().join("cfg.json"), r#"{"command": "fit", "out": "d"}"#).unwrap();
    assert_eq!(nhfa(&["synth", "--config", "cfg.json"], tmp.path()).status.code(), Some(2));
    assert!(!tmp.path().join("d").exists());
}

#[test]
fn fit_writes_one_trace_line_per_sweep_and_thinned_snapshots() {
    let tmp = tempfile::tempdir().unwrap();
    let fit = small_fit(tmp.path(), &["--iters", "10", "--thin", "5", "--burn", "0"]);
    assert_eq!(read(fit.join("trace.jsonl")).lines().count(), 10);
    let names: Vec<String> =
        std::fs::read_dir(fit.join("snapshots")).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    assert_eq!(names.len(), 2);
    let summary: Value = serde_json::from_str(&read(fit.join("fit.json"))).unwrap();
    assert_eq!(summary["snapshots"].as_array().unwrap().len(), 2);
    // no staging directory left behind
    assert!(std::fs::read_dir(&fit).unwrap().all(|e| !e.unwrap().file_name().to_string_lossy().starts_with('.')));
}

#[test]
fn fit_is_byte_identical_across_runs_and_seed_sensitive() {
    let tmp = tempfile::tempdir().unwrap();
    small_data(tmp.path(), "data", "3", "15");
    let run = |out: &str, seed: &str| {
        ok(nhfa(
            &[
                "fit",
                "--data",
                "data/source_0.csv",
                "--data",
                "data/source_1.csv",
                "--iters",
                "12",
                "--burn",
                "4",
                "--thin",
                "4",
                "--seed",
                seed,
                "--out",
                out,
            ],
            tmp.path(),
        ))
    };
    run("a", "5");
    run("b", "5");
    run("c", "6");
    let files = |d: &str| {
        let mut v = vec![read(tmp.path().join(d).join("trace.jsonl"))];
        for i in [8, 12] {
            v.push(read(tmp.path().join(d).join(format!("snapshots/snapshot_{i:06}.json"))));
        }
        v
    };
    assert_eq!(files("a"), files("b"));
    assert_ne!(files("a")[0], files("c")[0]);
}

#[test]
fn flags_override_the_config_file_and_the_environment_supplies_the_seed() {
    let tmp = tempfile::tempdir().unwrap();
    small_data(tmp.path(), "data", "3", "10");
    std::fs::write(
        tmp.path().join("cfg.json"),
        r#"{"command": "fit", "inputs": ["data/source_0.csv", "data/source_1.csv"], "out": "f",
            "sweep": {"iterations": 8, "burn_in": 0, "thinning": 4}}"#,
    )
    .unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_nhfa"))
        .args(["fit", "--config", "cfg.json", "--iters", "6", "--thin", "3"])
        .current_dir(tmp.path())
        .env("NHFA_SEED", "41")
        .output()
        .unwrap();
    ok(out);
    let trace = read(tmp.path().join("f/trace.jsonl"));
    assert_eq!(trace.lines().count(), 6);
    let first: Value = serde_json::from_str(trace.lines().next().unwrap()).unwrap();
    assert_eq!(first["seed"], 41);

    let out = Command::new(env!("CARGO_BIN_EXE_nhfa"))
        .args(["fit", "--config", "cfg.json", "--seed", "2", "--out", "g"])
        .current_dir(tmp.path())
        .env("NHFA_SEED", "41")
        .output()
        .unwrap();
    ok(out);
    let trace = read(tmp.path().join("g/trace.jsonl"));
    assert_eq!(trace.lines().count(), 8);
    let first: Value = serde_json::from_str(trace.lines().next().unwrap()).unwrap();
    assert_eq!(first["seed"], 2);
}

#[test]
fn perplexity_reports_its_settings_and_matches_the_pair_table() {
    let tmp = tempfile::tempdir().unwrap();
    small_fit(tmp.path(), &["--iters", "10", "--thin", "10", "--burn", "0"]);
    small_data(tmp.path(), "test", "4", "6");
    ok(nhfa(
        &[
            "perplexity",
            "--fit",
            "fit",
            "--test",
            "test/source_0.csv",
            "--test",
            "test/source_1.csv",
            "--samples",
            "1",
            "--burn",
            "3",
            "--seed",
            "9",
            "--out",
            "p",
        ],
        tmp.path(),
    ));
    let report: Value = serde_json::from_str(&read(tmp.path().join("p/perplexity.json"))).unwrap();
    assert_eq!(report["L"], 1);
    assert_eq!(report["R"], 1);
    assert_eq!(report["burn"], 3);
    assert_eq!(report["seed"], 9);
    let ppd = report["ppd"].as_f64().unwrap();
    assert!(ppd.is_finite() && ppd > 0.0);

    // Recompute from the dumped per-pair table.
    ok(nhfa(
        &[
            "perplexity",
            "--fit",
            "fit",
            "--test",
            "test/source_0.csv",
            "--test",
            "test/source_1.csv",
            "--samples",
            "3",
            "--burn",
            "3",
            "--out",
            "q",
        ],
        tmp.path(),
    ));
    let report: Value = serde_json::from_str(&read(tmp.path().join("q/perplexity.json"))).unwrap();
    let lls: Vec<f64> =
        read(tmp.path().join("q/pairs.csv")).lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(lls.len(), 3);
    let n_docs = report["n_docs"].as_u64().unwrap() as usize;
    assert_eq!(n_docs, 12);
    let by_hand = perplexity_per_doc(log_mean_exp(&lls), n_docs);
    let reported = report["ppd"].as_f64().unwrap();
    assert!((by_hand / reported - 1.0).abs() < 1e-12, "{by_hand} vs {reported}");
    assert!((report["log_ppd"].as_f64().unwrap() - by_hand.ln()).abs() < 1e-9 * by_hand.ln().abs());
}

#[test]
fn retrieve_writes_one_precision_row_per_cutoff() {
    let tmp = tempfile::tempdir().unwrap();
    small_fit(tmp.path(), &["--iters", "10", "--thin", "10", "--burn", "0"]);
    small_data(tmp.path(), "query", "5", "4");
    let train_labels: String = (0..30).map(|i| format!("c{}\n", i % 3)).collect();
    let query_labels: String = (0..8).map(|i| format!("c{}\n", i % 3)).collect();
    std::fs::write(tmp.path().join("train.txt"), train_labels).unwrap();
    std::fs::write(tmp.path().join("query.txt"), query_labels).unwrap();
    ok(nhfa(
        &[
            "retrieve",
            "--fit",
            "fit",
            "--query",
            "query/source_0.csv",
            "--query",
            "query/source_1.csv",
            "--query-labels",
            "query.txt",
            "--train-labels",
            "train.txt",
            "--n",
            "1,3,10",
            "--out",
            "r",
        ],
        tmp.path(),
    ));
    let csv = read(tmp.path().join("r/precision_at.csv"));
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 3);
    for (row, n) in rows.iter().zip(["1", "3", "10"]) {
        let (cut, p) = row.split_once(',').unwrap();
        assert_eq!(cut, n);
        assert!((0.0..=1.0).contains(&p.parse::<f64>().unwrap()));
    }
    let report: Value = serde_json::from_str(&read(tmp.path().join("r/retrieval.json"))).unwrap();
    assert!((0.0..=1.0).contains(&report["map"].as_f64().unwrap()));
    assert_eq!(report["n_queries"], 8);

    std::fs::write(tmp.path().join("query.txt"), "c0\n").unwrap();
    let out = nhfa(
        &[
            "retrieve",
            "--fit",
            "fit",
            "--query",
            "query/source_0.csv",
            "--query-labels",
            "query.txt",
            "--train-labels",
            "train.txt",
            "--out",
            "r2",
        ],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(!tmp.path().join("r2").exists());
}

#[test]
fn missing_inputs_are_configuration_errors_and_unwritable_outputs_runtime_errors() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(nhfa(&["fit", "--data", "nope.csv", "--out", "f"], tmp.path()).status.code(), Some(2));
    assert_eq!(nhfa(&["perplexity", "--fit", "nowhere", "--test", "x.csv", "--out", "p"], tmp.path()).status.code(), Some(2));
    assert!(!tmp.path().join("f").exists());
    std::fs::write(tmp.path().join("blocker"), "").unwrap();
    assert_eq!(nhfa(&["synth", "--out", "blocker/d"], tmp.path()).status.code(), Some(3));
}

#[test]
fn diagnose_runs_the_oracle_checks() {
    let tmp = tempfile::tempdir().unwrap();
    let out = ok(nhfa(&["diagnose", "--skip-geweke", "--mc-samples", "20000", "--ks-samples", "2000", "--out", "diag"], tmp.path()));
    let table = String::from_utf8(out.stdout).unwrap();
    assert!(table.contains("tail") && table.contains("ars") && table.contains("marginal"));
    assert!(!table.contains("FAIL"));
    let checks: Value = serde_json::from_str(&read(tmp.path().join("diag/diagnose.json"))).unwrap();
    assert!(checks.as_array().unwrap().iter().all(|c| c["passed"] == true));
}
