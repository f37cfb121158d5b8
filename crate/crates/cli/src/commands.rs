use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use nhfa::data::{DataMode, Source, SourceDataset, SourceMatrix};
use nhfa::dist::RngStream;
use nhfa::engine::{heldout_infer, predictive_log_likelihood, snapshot_from_json, snapshot_to_json, ModelKind, ModelState, Sampler};
use nhfa::eval::io::{format_value, load_source, sidecar_path, write_labels};
use nhfa::eval::{
    infer_test_coefficients, perplexity_per_doc, retrieval_eval, synth_generate, write_csv, write_matrix_market, InputFormat,
    LabeledSource, RetrievalGroundTruth,
};

use crate::args::{DiagnoseArgs, FitArgs, PerplexityArgs, RetrieveArgs, SynthArgs};
use crate::checks::{self, Check};
use crate::config::{guess_format, RunConfig};
use crate::error::{CliError, CliResult};
use crate::output::Staged;

pub const TRACE_FILE: &str = "trace.jsonl";
pub const FIT_FILE: &str = "fit.json";
pub const SNAPSHOT_DIR: &str = "snapshots";

fn json<T: Serialize>(value: &T) -> CliResult<String> {
    serde_json::to_string_pretty(value).map(|s| s + "\n").map_err(CliError::runtime)
}

fn io_err(e: nhfa::Error) -> std::io::Error {
    std::io::Error::other(e.to_string())
}

fn mode_of(kind: ModelKind) -> DataMode {
    match kind {
        ModelKind::Pgm => DataMode::Counts,
        ModelKind::Ggm => DataMode::Reals,
    }
}

fn load_parts(paths: &[PathBuf], format: Option<InputFormat>, mode: DataMode) -> CliResult<Vec<LabeledSource>> {
    paths
        .iter()
        .map(|p| {
            load_source(p, format.unwrap_or_else(|| guess_format(p)), mode).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))
        })
        .collect()
}

/// Re-indexes sources onto a fixed dictionary. Terms outside it are dropped
/// and their count reported.
pub fn onto_dictionary(parts: Vec<LabeledSource>, labels: &[String]) -> CliResult<(SourceDataset, usize)> {
    let index: HashMap<&str, usize> = labels.iter().enumerate().map(|(r, l)| (l.as_str(), r)).collect();
    let mut dropped = 0;
    let mut sources = Vec::with_capacity(parts.len());
    for p in parts {
        let old = &p.source.matrix;
        let mut x = SourceMatrix::zeros(labels.len(), old.cols());
        for (m, l) in p.labels.iter().enumerate() {
            match index.get(l.as_str()) {
                Some(&r) => (0..old.cols()).for_each(|i| x.set(r, i, old.get(m, i))),
                None => dropped += 1,
            }
        }
        sources.push(Source { name: p.source.name, doc_ids: p.source.doc_ids, matrix: x });
    }
    Ok((SourceDataset::new(labels.to_vec(), sources).map_err(CliError::config)?, dropped))
}

// ---------------------------------------------------------------- synth

pub fn synth(args: &SynthArgs) -> CliResult<Vec<PathBuf>> {
    let cfg = RunConfig::load(args.config.as_deref(), "synth")?;
    let mut spec = cfg.synth.clone().unwrap_or_default();
    spec.seed = cfg.seed(args.seed, spec.seed)?;
    macro_rules! flag {
        ($f:ident, $field:ident) => {
            if let Some(v) = args.$f {
                spec.$field = v;
            }
        };
    }
    flag!(features, n_features);
    flag!(sources, n_sources);
    flag!(exclusive, exclusive);
    flag!(shared, shared);
    flag!(noise, noise);
    if let Some(m) = args.mode {
        spec.mode = m.into();
    }
    if !args.points.is_empty() {
        spec.n_points = args.points.clone();
    }
    spec.validate().map_err(CliError::config)?;
    let out = cfg.out(args.out.as_deref())?;
    let (data, truth) = synth_generate(&spec).map_err(CliError::runtime)?;

    let mut staged = Staged::new(&out)?;
    for (j, s) in data.sources.iter().enumerate() {
        match InputFormat::from(args.format) {
            InputFormat::Csv => staged.write(format!("source_{j}.csv"), |w| write_csv(w, &data.labels, s).map_err(io_err))?,
            InputFormat::MatrixMarket => {
                let name = PathBuf::from(format!("source_{j}.mtx"));
                staged.write(&name, |w| write_matrix_market(w, s).map_err(io_err))?;
                staged.write(sidecar_path(&name), |w| write_labels(w, &data.labels).map_err(io_err))?;
            }
        }
    }
    staged.write_str("truth.json", &json(&truth)?)?;
    staged.write_str("spec.json", &json(&spec)?)?;
    staged.commit()
}

// ---------------------------------------------------------------- fit

/// Summary written next to the trace; later commands read the dictionary
/// and the stored states from it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSummary {
    pub model: ModelKind,
    pub seed: u64,
    pub iterations: usize,
    pub burn_in: usize,
    pub thinning: usize,
    pub inputs: Vec<PathBuf>,
    pub labels: Vec<String>,
    pub n_points: Vec<usize>,
    /// Relative to the fit directory.
    pub snapshots: Vec<PathBuf>,
    pub final_active_k: usize,
}

pub fn snapshot_name(iteration: u64) -> PathBuf {
    Path::new(SNAPSHOT_DIR).join(format!("snapshot_{iteration:06}.json"))
}

pub fn fit(args: &FitArgs) -> CliResult<FitSummary> {
    let cfg = RunConfig::load(args.config.as_deref(), "fit")?;
    let mut sweep = cfg.sweep.clone().unwrap_or_default();
    sweep.seed = cfg.seed(args.seed, sweep.seed)?;
    if let Some(m) = args.model.map(ModelKind::from).or(cfg.model) {
        sweep.kind = m;
    }
    sweep.iterations = args.iters.unwrap_or(sweep.iterations);
    sweep.burn_in = args.burn.unwrap_or(sweep.burn_in);
    sweep.thinning = args.thin.unwrap_or(sweep.thinning);
    sweep.timing |= args.timing;
    if args.fixed_scales {
        sweep.resample_hyper_scales = false;
    }
    sweep.validate().map_err(CliError::config)?;
    let priors = cfg.priors.clone().unwrap_or_default();
    priors.validate().map_err(CliError::config)?;
    let inputs = RunConfig::paths(&args.data, &cfg.inputs, "input matrices (--data)")?;
    let format = args.format.map(InputFormat::from).or(cfg.format);
    let out = cfg.out(args.out.as_deref())?;

    let parts = load_parts(&inputs, format, mode_of(sweep.kind))?;
    let data = nhfa::eval::merge_sources(parts).map_err(CliError::config)?;
    let sampler = Sampler::new(&data, sweep.clone(), priors).map_err(CliError::config)?;

    let started = Instant::now();
    let mut staged = Staged::new(&out)?;
    let mut state = sampler.init_state(&mut RngStream::new(sweep.seed, 0)).map_err(CliError::runtime)?;
    let mut trace = String::new();
    let mut snapshots = Vec::new();
    let mut write_err = None;
    sampler
        .run_from(&mut state, |s, _, rec| {
            trace.push_str(&serde_json::to_string(rec)?);
            trace.push('\n');
            if sweep.keeps(s.iteration as usize) {
                let name = snapshot_name(s.iteration);
                let text = snapshot_to_json(s, sweep.seed)?;
                if let Err(e) = staged.write_str(&name, &text) {
                    write_err.get_or_insert(e);
                }
                snapshots.push(name);
            }
            Ok(())
        })
        .map_err(CliError::runtime)?;
    if let Some(e) = write_err {
        return Err(e);
    }
    staged.write_str(TRACE_FILE, &trace)?;
    let summary = FitSummary {
        model: sweep.kind,
        seed: sweep.seed,
        iterations: sweep.iterations,
        burn_in: sweep.burn_in,
        thinning: sweep.thinning,
        inputs,
        labels: data.labels.clone(),
        n_points: data.n_points(),
        snapshots,
        final_active_k: state.active_k(),
    };
    staged.write_str(FIT_FILE, &json(&summary)?)?;
    staged.commit()?;
    if sweep.timing {
        let secs = started.elapsed().as_secs_f64();
        eprintln!("{} sweeps in {secs:.2} s ({:.1} ms/sweep)", sweep.iterations, 1e3 * secs / sweep.iterations.max(1) as f64);
    }
    Ok(summary)
}

pub fn load_fit(dir: &Path) -> CliResult<(FitSummary, Vec<ModelState>)> {
    let path = dir.join(FIT_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::Config(format!("reading {}: {e}", path.display())))?;
    let summary: FitSummary = serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let states = summary
        .snapshots
        .iter()
        .map(|rel| {
            let p = dir.join(rel);
            let text = std::fs::read_to_string(&p).map_err(|e| CliError::Config(format!("reading {}: {e}", p.display())))?;
            snapshot_from_json(&text).map(|s| s.0).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))
        })
        .collect::<CliResult<Vec<_>>>()?;
    if states.is_empty() {
        return Err(CliError::Config(format!("{} stores no states", dir.display())));
    }
    Ok((summary, states))
}

fn fit_dir(flag: Option<&Path>, cfg: &RunConfig) -> CliResult<PathBuf> {
    flag.map(Path::to_path_buf).or_else(|| cfg.inputs.first().cloned()).ok_or_else(|| CliError::Config("no fit directory (--fit)".into()))
}

// ---------------------------------------------------------------- perplexity

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerplexityReport {
    pub model: ModelKind,
    pub seed: u64,
    /// Stored training states used.
    #[serde(rename = "L")]
    pub l: usize,
    /// Held-out samples per training state.
    #[serde(rename = "R")]
    pub r: usize,
    pub burn: usize,
    pub n_docs: usize,
    pub dropped_terms: usize,
    pub log_likelihood: f64,
    /// `-log_likelihood / n_docs`.
    pub log_ppd: f64,
    pub ppd: f64,
}

pub fn perplexity(args: &PerplexityArgs) -> CliResult<PerplexityReport> {
    let cfg = RunConfig::load(args.config.as_deref(), "perplexity")?;
    let dir = fit_dir(args.fit.as_deref(), &cfg)?;
    let (summary, states) = load_fit(&dir)?;
    let mut pc = cfg.predictive.clone().unwrap_or_default();
    pc.seed = cfg.seed(args.seed, pc.seed)?;
    pc.samples = args.samples.unwrap_or(pc.samples);
    pc.burn_in = args.burn.unwrap_or(pc.burn_in);
    pc.train_source = args.train_source.unwrap_or(pc.train_source);
    if pc.samples == 0 {
        return Err(CliError::Config("need at least one held-out sample".into()));
    }
    let tests = RunConfig::paths(&args.test, &cfg.test, "held-out matrices (--test)")?;
    let format = args.format.map(InputFormat::from).or(cfg.format);
    let out = cfg.out(args.out.as_deref())?;

    let parts = load_parts(&tests, format, mode_of(summary.model))?;
    let (test, dropped) = onto_dictionary(parts, &summary.labels)?;
    if dropped > 0 {
        eprintln!("dropped {dropped} held-out terms outside the training dictionary");
    }
    let samples = heldout_infer(&test, &states, &pc).map_err(|e| match e {
        nhfa::Error::InvalidArgument(_) | nhfa::Error::DimensionMismatch(_) => CliError::config(e),
        e => CliError::runtime(e),
    })?;
    let result = predictive_log_likelihood(&test, &samples);
    let n_docs: usize = test.n_points().iter().sum();
    let report = PerplexityReport {
        model: summary.model,
        seed: pc.seed,
        l: states.len(),
        r: pc.samples,
        burn: pc.burn_in,
        n_docs,
        dropped_terms: dropped,
        log_likelihood: result.log_likelihood,
        log_ppd: -result.log_likelihood / n_docs as f64,
        ppd: perplexity_per_doc(result.log_likelihood, n_docs),
    };
    let mut staged = Staged::new(&out)?;
    staged.write("pairs.csv", |w| {
        writeln!(w, "snapshot,log_likelihood")?;
        result.pairs.iter().try_for_each(|(l, ll)| writeln!(w, "{l},{}", format_value(*ll)))
    })?;
    staged.write_str("perplexity.json", &json(&report)?)?;
    staged.commit()?;
    Ok(report)
}

// ---------------------------------------------------------------- retrieve

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetrieveReport {
    pub snapshot: usize,
    pub active_k: usize,
    pub n_queries: usize,
    pub n_train: usize,
    pub map: f64,
    pub average_precision: Vec<f64>,
}

fn read_labels(path: &Path) -> CliResult<Vec<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("reading {}: {e}", path.display())))?;
    Ok(text.lines().map(str::trim).filter(|l| !l.is_empty()).map(str::to_owned).collect())
}

/// Training coefficients `z ⊙ w` of every stored training point, restricted
/// to the listed columns.
pub fn training_coefficients(state: &ModelState, cols: &[usize]) -> Vec<Vec<f64>> {
    let w = state.params.w();
    state
        .assign
        .sources
        .iter()
        .enumerate()
        .flat_map(|(j, z)| (0..z.n_points()).map(move |i| cols.iter().map(|&k| if z.get(i, k) { w[j][k][i] } else { 0.0 }).collect()))
        .collect()
}

pub fn retrieve(args: &RetrieveArgs) -> CliResult<RetrieveReport> {
    let cfg = RunConfig::load(args.config.as_deref(), "retrieve")?;
    let dir = fit_dir(args.fit.as_deref(), &cfg)?;
    let (summary, states) = load_fit(&dir)?;
    let index = args.snapshot.unwrap_or(states.len() - 1);
    let state = states.get(index).ok_or_else(|| CliError::Config(format!("snapshot {index} out of range (have {})", states.len())))?;
    if args.n.is_empty() || args.n.contains(&0) {
        return Err(CliError::Config("precision cut-offs must be positive".into()));
    }
    let queries = RunConfig::paths(&args.query, &cfg.test, "query matrices (--query)")?;
    let format = args.format.map(InputFormat::from).or(cfg.format);
    let out = cfg.out(args.out.as_deref())?;

    let parts = load_parts(&queries, format, mode_of(summary.model))?;
    let (test, _) = onto_dictionary(parts, &summary.labels)?;
    let cols: Vec<usize> = (0..state.k_dagger()).filter(|&k| state.assign.is_active(k)).collect();
    let phi: Vec<Vec<f64>> = cols.iter().map(|&k| state.params.phi()[k].clone()).collect();
    let mut h_query = Vec::new();
    for s in &test.sources {
        h_query.extend(infer_test_coefficients(&s.matrix, &phi).map_err(CliError::runtime)?);
    }
    let h_train = training_coefficients(state, &cols);
    let truth = RetrievalGroundTruth { query_labels: read_labels(&args.query_labels)?, train_labels: read_labels(&args.train_labels)? };
    if truth.query_labels.len() != h_query.len() || truth.train_labels.len() != h_train.len() {
        return Err(CliError::Config(format!(
            "{} query and {} training labels for {} query and {} training documents",
            truth.query_labels.len(),
            truth.train_labels.len(),
            h_query.len(),
            h_train.len()
        )));
    }
    let r = retrieval_eval(&h_query, &h_train, &truth, &args.n).map_err(CliError::runtime)?;
    let report = RetrieveReport {
        snapshot: index,
        active_k: cols.len(),
        n_queries: h_query.len(),
        n_train: h_train.len(),
        map: r.map,
        average_precision: r.average_precision,
    };
    let mut staged = Staged::new(&out)?;
    staged.write("precision_at.csv", |w| {
        writeln!(w, "n,precision")?;
        r.precision_at.iter().try_for_each(|(n, p)| writeln!(w, "{n},{}", format_value(*p)))
    })?;
    staged.write_str("retrieval.json", &json(&report)?)?;
    staged.commit()?;
    Ok(report)
}

// ---------------------------------------------------------------- diagnose

pub fn diagnose_checks(args: &DiagnoseArgs, seed: u64) -> Vec<Check> {
    let mut all = checks::tail_oracle_checks(1e5);
    all.extend(checks::marginal_mc_checks(args.mc_samples, seed));
    all.extend(checks::stick_moment_checks(args.mc_samples, seed.wrapping_add(1)));
    all.extend(checks::ars_ks_checks(args.ks_samples, seed.wrapping_add(2)));
    if !args.skip_geweke {
        all.extend(checks::geweke_checks(args.samples, seed.wrapping_add(3)));
        if args.mutation {
            all.push(checks::geweke_power_check(args.samples, seed.wrapping_add(5)));
        }
    }
    all
}

pub fn print_checks(checks: &[Check], mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "{:<13} {:<40} {:>12} {:>10}  result", "group", "check", "value", "limit")?;
    for c in checks {
        let cmp = if c.higher_is_better { ">" } else { "<" };
        writeln!(
            w,
            "{:<13} {:<40} {:>12.4e} {cmp}{:>9.3e}  {}",
            c.group,
            c.name,
            c.value,
            c.limit,
            if c.passed { "pass" } else { "FAIL" }
        )?;
    }
    Ok(())
}

pub fn diagnose(args: &DiagnoseArgs) -> CliResult<Vec<Check>> {
    let seed = RunConfig::default().seed(args.seed, 0)?;
    let checks = diagnose_checks(args, seed);
    print_checks(&checks, std::io::stdout().lock()).map_err(CliError::runtime)?;
    if let Some(out) = &args.out {
        let mut staged = Staged::new(out)?;
        staged.write_str("diagnose.json", &json(&checks)?)?;
        staged.commit()?;
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    if failed > 0 {
        return Err(CliError::Diagnostic(format!("{failed} of {} checks failed", checks.len())));
    }
    Ok(checks)
}
