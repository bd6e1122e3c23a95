//! Experiment runner: TOML configs, per-seed output directories, run
//! summaries, verification and multi-run comparison.
//!
//! Layout of one experiment:
//!
//! ```text
//! <output>/aggregate.toml
//! <output>/seed-<s>/config.toml      snapshot with seeds = [s]
//! <output>/seed-<s>/metrics.csv      one row per iteration
//! <output>/seed-<s>/norm_trace.csv   iteration, l2_sgd, l2_psf, ...
//! <output>/seed-<s>/summary.toml
//! <output>/seed-<s>/ERROR            only when the run failed
//! ```
//!
//! Relative output directories are resolved against `$VSAM_OUTPUT_ROOT`
//! when it is set.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{generate_dataset, Dataset, DatasetKind};
use crate::diagnostics::{norm_trace, read_norm_trace, write_norm_trace};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::metrics::{read_metrics, write_text, MetricsRecord, MetricsWriter};
use crate::objective::{make_sharp_flat, Activation, ObjectiveSpec};
use crate::optim::{LrSchedule, Method, Optimizer, OptimizerConfig};
use crate::rng::{self, Stream};
use crate::sampler::SamplerConfig;
use crate::train::{DataSplit, Trainer};

pub const OUTPUT_ROOT_ENV: &str = "VSAM_OUTPUT_ROOT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawObjective {
    pub kind: String,
    #[serde(default)]
    pub weight_decay: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width_sharp: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width_flat: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth_gap: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub separation: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub widths: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub activation: Option<Activation>,
}

impl RawObjective {
    fn present(&self) -> Vec<&'static str> {
        let mut keys = Vec::new();
        macro_rules! check {
            ($($f:ident),*) => {$(if self.$f.is_some() { keys.push(stringify!($f)); })*};
        }
        check!(
            a,
            b,
            dim,
            width_sharp,
            width_flat,
            depth_gap,
            separation,
            widths,
            activation
        );
        keys
    }

    pub fn build(&self) -> Result<ObjectiveSpec> {
        let allowed: &[&str] = match self.kind.as_str() {
            "quadratic" => &["a", "b"],
            "rosenbrock" => &["dim"],
            "sharp_flat" => &["width_sharp", "width_flat", "depth_gap", "separation"],
            "mlp_classifier" => &["widths", "activation"],
            other => {
                return Err(Error::config(format!(
                    "unknown objective kind {other:?} (expected quadratic, rosenbrock, sharp_flat or mlp_classifier)"
                )))
            }
        };
        if let Some(k) = self.present().into_iter().find(|k| !allowed.contains(k)) {
            return Err(Error::config(format!(
                "objective key {k:?} does not apply to kind {:?}",
                self.kind
            )));
        }
        let need = |name: &str| Error::config(format!("{} objective requires {name}", self.kind));
        match self.kind.as_str() {
            "quadratic" => {
                let rows = self.a.as_ref().ok_or_else(|| need("a"))?;
                let a = Matrix::from_rows(rows)
                    .ok_or_else(|| Error::config("quadratic a must be a square matrix"))?;
                let b = self.b.clone().unwrap_or_else(|| vec![0.0; a.dim()]);
                ObjectiveSpec::quadratic(a, b, self.weight_decay)
            }
            "rosenbrock" => ObjectiveSpec::rosenbrock(self.dim.unwrap_or(2), self.weight_decay),
            "sharp_flat" => {
                if self.weight_decay != 0.0 {
                    return Err(Error::config("sharp_flat does not take weight_decay"));
                }
                make_sharp_flat(
                    self.width_sharp.ok_or_else(|| need("width_sharp"))?,
                    self.width_flat.ok_or_else(|| need("width_flat"))?,
                    self.depth_gap.unwrap_or(0.0),
                    self.separation.ok_or_else(|| need("separation"))?,
                )
            }
            _ => ObjectiveSpec::mlp(
                self.widths.clone().ok_or_else(|| need("widths"))?,
                self.activation.unwrap_or(Activation::Tanh),
                self.weight_decay,
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub kind: DatasetKind,
    pub n: usize,
    #[serde(default = "default_noise")]
    pub noise: f64,
    /// Fixed across run seeds so every seed sees the same data.
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
}

fn default_noise() -> f64 {
    0.1
}

fn default_train_fraction() -> f64 {
    0.8
}

impl DatasetSpec {
    pub fn materialize(&self) -> Result<(Dataset, Dataset)> {
        generate_dataset(self.kind, self.n, self.noise, self.seed)?
            .split(self.train_fraction, self.seed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawOptimizer {
    pub method: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub momentum: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lr_schedule: Option<LrSchedule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grad_eval_budget: Option<u64>,
}

impl RawOptimizer {
    pub fn config(&self) -> OptimizerConfig {
        let d = OptimizerConfig::default();
        OptimizerConfig {
            eta0: self.eta0.unwrap_or(d.eta0),
            rho: self.rho.unwrap_or(d.rho),
            gamma: self.gamma.unwrap_or(d.gamma),
            momentum: self.momentum.unwrap_or(d.momentum),
            lr_schedule: self.lr_schedule.unwrap_or(d.lr_schedule),
            grad_eval_budget: self.grad_eval_budget,
        }
    }
}

/// The on-disk configuration, exactly as written.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epochs: Option<usize>,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init: Option<Vec<f64>>,
    #[serde(default)]
    pub init_jitter: f64,
    pub objective: RawObjective,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<DatasetSpec>,
    pub optimizer: RawOptimizer,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sampler: Option<SamplerConfig>,
}

fn default_batch_size() -> usize {
    32
}

fn default_seeds() -> Vec<u64> {
    vec![0, 1, 2]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunLength {
    Iterations(usize),
    Epochs(usize),
}

/// A validated experiment.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub raw: RawConfig,
    pub label: String,
    pub objective: ObjectiveSpec,
    pub dataset: Option<DatasetSpec>,
    pub method: Method,
    pub optimizer: OptimizerConfig,
    pub length: RunLength,
    pub batch_size: usize,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let raw: RawConfig =
            toml::from_str(text).map_err(|e| Error::config(format!("config: {e}")))?;
        Self::from_raw(raw)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn from_raw(raw: RawConfig) -> Result<Self> {
        let objective = raw.objective.build()?;
        if objective.needs_data() != raw.dataset.is_some() {
            return Err(Error::config(if objective.needs_data() {
                "mlp_classifier objective requires a [dataset] section"
            } else {
                "analytic objectives do not take a [dataset] section"
            }));
        }
        if let (Some(d), Some(m)) = (&raw.dataset, objective.as_mlp()) {
            if m.input_dim() != 2 || m.classes() != 2 {
                return Err(Error::config(format!(
                    "{} data is 2-D with 2 classes; mlp widths must start and end with 2",
                    d.kind
                )));
            }
            if !(d.train_fraction > 0.0 && d.train_fraction < 1.0) {
                return Err(Error::config("train_fraction must lie in (0, 1)"));
            }
        }
        let method = match (raw.optimizer.method.as_str(), raw.optimizer.k) {
            ("sgd", None) => Method::Sgd,
            ("sam", None) => Method::Sam,
            ("sam_k", Some(k)) => Method::SamK { k },
            ("sam_k", None) => return Err(Error::config("sam_k requires k")),
            ("vsam", None) => Method::Vsam(raw.sampler.clone().unwrap_or_default()),
            (m @ ("sgd" | "sam" | "vsam"), Some(_)) => {
                return Err(Error::config(format!("k does not apply to method {m}")))
            }
            (other, _) => {
                return Err(Error::config(format!(
                    "unknown method {other:?} (expected sgd, sam, sam_k or vsam)"
                )))
            }
        };
        if raw.sampler.is_some() && !matches!(method, Method::Vsam(_)) {
            return Err(Error::config("[sampler] applies only to method vsam"));
        }
        method.validate()?;
        let optimizer = raw.optimizer.config();
        optimizer.validate()?;
        let length = match (raw.iterations, raw.epochs) {
            (Some(n), None) => RunLength::Iterations(n),
            (None, Some(e)) => RunLength::Epochs(e),
            _ => return Err(Error::config("set exactly one of iterations or epochs")),
        };
        if matches!(length, RunLength::Iterations(0) | RunLength::Epochs(0)) {
            return Err(Error::config("run length must be at least 1"));
        }
        if raw.batch_size == 0 {
            return Err(Error::config("batch_size must be at least 1"));
        }
        if raw.seeds.is_empty() {
            return Err(Error::config("seeds must list at least one seed"));
        }
        let mut unique = raw.seeds.clone();
        unique.sort_unstable();
        unique.dedup();
        if unique.len() != raw.seeds.len() {
            return Err(Error::config("seeds must be distinct"));
        }
        if let Some(w0) = &raw.init {
            objective.params(w0.clone())?;
        }
        if !(raw.init_jitter >= 0.0 && raw.init_jitter.is_finite()) {
            return Err(Error::config("init_jitter must be a nonnegative number"));
        }
        Ok(Self {
            label: raw.name.clone().unwrap_or_else(|| method.name()),
            output_dir: resolve_output(&raw.output_dir),
            batch_size: raw.batch_size,
            seeds: raw.seeds.clone(),
            dataset: raw.dataset.clone(),
            raw,
            objective,
            method,
            optimizer,
            length,
        })
    }

    /// The config restricted to one seed, as TOML.
    pub fn snapshot(&self, seed: u64) -> String {
        let mut raw = self.raw.clone();
        raw.seeds = vec![seed];
        toml::to_string(&raw).expect("config serializes")
    }

    pub fn seed_dir(&self, seed: u64) -> PathBuf {
        self.output_dir.join(format!("seed-{seed}"))
    }

    fn initial_params(&self, seed: u64) -> Result<Vec<f64>> {
        let Some(w0) = &self.raw.init else {
            return Ok(self.objective.init_params(seed).into_values());
        };
        let mut w = w0.clone();
        if self.raw.init_jitter > 0.0 {
            let mut r = rng::stream(seed, Stream::Init);
            let j = self.raw.init_jitter;
            for v in &mut w {
                *v += r.gen_range(-j..=j);
            }
        }
        Ok(w)
    }
}

fn resolve_output(dir: &Path) -> PathBuf {
    match std::env::var_os(OUTPUT_ROOT_ENV) {
        Some(root) if !root.is_empty() => PathBuf::from(root).join(dir),
        _ => dir.to_path_buf(),
    }
}

/// Examples per second, `D·E/T`.
pub fn compute_ais(examples_per_epoch: f64, epochs: f64, seconds: f64) -> Result<f64> {
    if !(examples_per_epoch > 0.0 && epochs > 0.0 && seconds > 0.0) {
        return Err(Error::Precondition(format!(
            "AIS inputs must be positive (D = {examples_per_epoch}, E = {epochs}, T = {seconds})"
        )));
    }
    Ok(examples_per_epoch * epochs / seconds)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSummary {
    pub label: String,
    pub method: String,
    pub objective: String,
    pub seed: u64,
    pub iterations: usize,
    pub examples_per_epoch: usize,
    pub epochs: f64,
    pub final_train_loss: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_eval_loss: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_accuracy: Option<f64>,
    pub sampling_number: u64,
    pub grad_evals: u64,
    /// Gradient evaluations relative to SAM over the same iterations.
    pub grad_evals_vs_sam: f64,
    pub wall_seconds: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ais: Option<f64>,
    pub stopped_by_budget: bool,
}

impl RunSummary {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::format("run summary", e.to_string()))
    }
}

/// Ratio of total gradient evaluations, `a / b`.
pub fn grad_eval_ratio(a: &RunSummary, b: &RunSummary) -> Result<f64> {
    if a.iterations != b.iterations {
        return Err(Error::Precondition(format!(
            "runs have different iteration counts ({} vs {})",
            a.iterations, b.iterations
        )));
    }
    if b.grad_evals == 0 {
        return Err(Error::Precondition(
            "reference run has no gradient evaluations".into(),
        ));
    }
    Ok(a.grad_evals as f64 / b.grad_evals as f64)
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[derive(Debug)]
pub struct SeedOutcome {
    pub seed: u64,
    pub dir: PathBuf,
    pub result: Result<RunSummary>,
}

#[derive(Debug)]
pub struct ExperimentOutcome {
    pub output_dir: PathBuf,
    pub seeds: Vec<SeedOutcome>,
}

impl ExperimentOutcome {
    pub fn summaries(&self) -> Vec<&RunSummary> {
        self.seeds
            .iter()
            .filter_map(|s| s.result.as_ref().ok())
            .collect()
    }

    pub fn failures(&self) -> Vec<(u64, &Error)> {
        self.seeds
            .iter()
            .filter_map(|s| s.result.as_ref().err().map(|e| (s.seed, e)))
            .collect()
    }
}

/// Runs every seed, writing artifacts as it goes. A failing seed leaves
/// its partial metrics and an `ERROR` file; the other seeds still run.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    fs::create_dir_all(&config.output_dir).map_err(|e| Error::io(&config.output_dir, e))?;
    let data = config
        .dataset
        .as_ref()
        .map(DatasetSpec::materialize)
        .transpose()?;
    let mut seeds = Vec::new();
    for &seed in &config.seeds {
        let dir = config.seed_dir(seed);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let _ = fs::remove_file(dir.join("ERROR"));
        let split = data.as_ref().map(|(train, eval)| DataSplit { train, eval });
        let result = run_seed(config, seed, split, &dir);
        if let Err(e) = &result {
            write_text(&dir.join("ERROR"), &format!("{e}\n"))?;
        }
        seeds.push(SeedOutcome { seed, dir, result });
    }
    let outcome = ExperimentOutcome {
        output_dir: config.output_dir.clone(),
        seeds,
    };
    write_aggregate(config, &outcome)?;
    Ok(outcome)
}

fn run_seed(
    config: &ExperimentConfig,
    seed: u64,
    data: Option<DataSplit<'_>>,
    dir: &Path,
) -> Result<RunSummary> {
    write_text(&dir.join("config.toml"), &config.snapshot(seed))?;
    let spec = &config.objective;
    let mut trainer = Trainer::new(spec, data, config.batch_size, seed)?;
    let bpe = trainer.batches_per_epoch();
    let iterations = match config.length {
        RunLength::Iterations(n) => n,
        RunLength::Epochs(e) => e * bpe,
    };
    let mut opt = Optimizer::new(
        config.method.clone(),
        config.optimizer.clone(),
        &spec.layout(),
        iterations,
        seed,
    )?;
    let mut w = config.initial_params(seed)?;
    let mut writer = MetricsWriter::create(&dir.join("metrics.csv"))?;
    let mut records: Vec<MetricsRecord> = Vec::with_capacity(iterations);
    let start = Instant::now();
    let run = trainer.run(&mut opt, &mut w, iterations, |r, _| {
        writer.write(r)?;
        records.push(r.clone());
        Ok(())
    });
    let wall_seconds = start.elapsed().as_secs_f64();
    write_norm_trace(&dir.join("norm_trace.csv"), &norm_trace(&records))?;
    let stopped_by_budget = run?;

    let last = records
        .last()
        .ok_or_else(|| Error::Contract("run produced no iterations".into()))?;
    let done = last.iteration;
    let examples_per_epoch = data.map_or(1, |d| d.train.len());
    let epochs = done as f64 / bpe as f64;
    let final_eval = records.iter().rev().find(|r| r.eval_loss.is_some());
    let summary = RunSummary {
        label: config.label.clone(),
        method: config.method.name(),
        objective: spec.kind_name().into(),
        seed,
        iterations: done,
        examples_per_epoch,
        epochs,
        final_train_loss: last.train_loss,
        final_eval_loss: final_eval.and_then(|r| r.eval_loss),
        final_accuracy: final_eval.and_then(|r| r.eval_accuracy),
        sampling_number: opt.samples(),
        grad_evals: opt.grad_evals(),
        grad_evals_vs_sam: opt.grad_evals() as f64 / (2 * done) as f64,
        wall_seconds,
        ais: compute_ais(examples_per_epoch as f64, epochs, wall_seconds).ok(),
        stopped_by_budget,
    };
    let text = toml::to_string(&summary).expect("summary serializes");
    write_text(&dir.join("summary.toml"), &text)?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub label: String,
    pub method: String,
    pub runs: usize,
    pub failed_seeds: Vec<u64>,
    pub stats: BTreeMap<String, [f64; 2]>,
}

fn aggregate(label: &str, method: &str, runs: &[&RunSummary]) -> Aggregate {
    let mut stats = BTreeMap::new();
    let mut put = |name: &str, f: &dyn Fn(&RunSummary) -> Option<f64>| {
        let vals: Vec<f64> = runs.iter().filter_map(|r| f(r)).collect();
        if !vals.is_empty() {
            let (m, s) = mean_std(&vals);
            stats.insert(name.to_string(), [m, s]);
        }
    };
    put("accuracy", &|r| r.final_accuracy.map(|a| 100.0 * a));
    put("eval_loss", &|r| r.final_eval_loss);
    put("train_loss", &|r| Some(r.final_train_loss));
    put("sampling_number", &|r| Some(r.sampling_number as f64));
    put("grad_evals", &|r| Some(r.grad_evals as f64));
    put("grad_evals_vs_sam", &|r| Some(r.grad_evals_vs_sam));
    put("ais", &|r| r.ais);
    Aggregate {
        label: label.into(),
        method: method.into(),
        runs: runs.len(),
        failed_seeds: Vec::new(),
        stats,
    }
}

fn write_aggregate(config: &ExperimentConfig, outcome: &ExperimentOutcome) -> Result<()> {
    let mut agg = aggregate(&config.label, &config.method.name(), &outcome.summaries());
    agg.failed_seeds = outcome.failures().iter().map(|(s, _)| *s).collect();
    let text = toml::to_string(&agg).expect("aggregate serializes");
    write_text(&config.output_dir.join("aggregate.toml"), &text)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct VerifyReport {
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        !self.checks.is_empty() && self.checks.iter().all(|c| c.passed)
    }
}

/// Run directories under `path`: itself if it holds `metrics.csv`,
/// otherwise its `seed-*` children.
pub fn run_dirs(path: &Path) -> Result<Vec<PathBuf>> {
    if path.join("metrics.csv").is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut dirs: Vec<PathBuf> = fs::read_dir(path)
        .map_err(|e| Error::io(path, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_dir()
                && p.file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n.starts_with("seed-"))
        })
        .collect();
    dirs.sort();
    Ok(dirs)
}

/// Recomputes accounting and summary fields from each run's metrics stream.
pub fn verify(path: &Path) -> Result<VerifyReport> {
    let mut report = VerifyReport::default();
    let dirs = run_dirs(path)?;
    if dirs.is_empty() {
        report.checks.push(Check::new(
            path.display().to_string(),
            false,
            "no run directories found",
        ));
    }
    for dir in dirs {
        verify_run(&dir, &mut report.checks);
    }
    Ok(report)
}

fn verify_run(dir: &Path, checks: &mut Vec<Check>) {
    let tag = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let mut push = |name: &str, ok: bool, detail: String| {
        checks.push(Check::new(format!("{tag}: {name}"), ok, detail));
    };
    if dir.join("ERROR").exists() {
        let msg = fs::read_to_string(dir.join("ERROR")).unwrap_or_default();
        push("completed", false, msg.trim().to_string());
        return;
    }
    let records = match read_metrics(&dir.join("metrics.csv")) {
        Ok(r) => r,
        Err(e) => return push("metrics readable", false, e.to_string()),
    };
    push(
        "metrics readable",
        !records.is_empty(),
        format!("{} rows", records.len()),
    );
    if records.is_empty() {
        return;
    }

    let consecutive = records
        .iter()
        .enumerate()
        .all(|(k, r)| r.iteration == k + 1);
    push("iterations consecutive", consecutive, String::new());

    let mut bad_step = None;
    let mut prev = 0;
    for r in &records {
        let expected = if r.sampled { 2 } else { 1 };
        if r.step_grad_evals != expected || r.cumulative_grad_evals != prev + expected {
            bad_step = Some(r.iteration);
            break;
        }
        prev = r.cumulative_grad_evals;
    }
    push(
        "per-step grad evals",
        bad_step.is_none(),
        bad_step
            .map(|i| format!("first mismatch at iteration {i}"))
            .unwrap_or_default(),
    );

    let n = records.len() as u64;
    let sampled = records.iter().filter(|r| r.sampled).count() as u64;
    let total = records.last().unwrap().cumulative_grad_evals;
    push(
        "grad evals = iterations + sampling number",
        total == n + sampled,
        format!("{total} vs {n} + {sampled}"),
    );

    match read_norm_trace(&dir.join("norm_trace.csv")) {
        Ok(rows) => push(
            "norm trace matches metrics",
            rows == norm_trace(&records),
            format!("{} rows", rows.len()),
        ),
        Err(e) => push("norm trace matches metrics", false, e.to_string()),
    }

    let summary = match RunSummary::load(&dir.join("summary.toml")) {
        Ok(s) => s,
        Err(e) => return push("summary readable", false, e.to_string()),
    };
    let last = records.last().unwrap();
    let final_eval = records.iter().rev().find(|r| r.eval_loss.is_some());
    let fields = [
        ("iterations", summary.iterations as u64 == n),
        ("sampling_number", summary.sampling_number == sampled),
        ("grad_evals", summary.grad_evals == total),
        (
            "final_train_loss",
            summary.final_train_loss == last.train_loss,
        ),
        (
            "final_accuracy",
            summary.final_accuracy == final_eval.and_then(|r| r.eval_accuracy),
        ),
        (
            "final_eval_loss",
            summary.final_eval_loss == final_eval.and_then(|r| r.eval_loss),
        ),
        (
            "grad_evals_vs_sam",
            summary.grad_evals_vs_sam == total as f64 / (2 * n) as f64,
        ),
    ];
    for (name, ok) in fields {
        push(&format!("summary {name}"), ok, String::new());
    }
}

/// Column order of the comparison CSV.
pub const REPORT_HEADER: [&str; 13] = [
    "label",
    "method",
    "runs",
    "accuracy_mean",
    "accuracy_std",
    "sampling_number_mean",
    "sampling_number_std",
    "grad_evals_mean",
    "grad_evals_std",
    "grad_evals_vs_sam_mean",
    "ais_mean",
    "ais_std",
    "excluded",
];

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub label: String,
    pub method: String,
    pub runs: usize,
    pub accuracy: Option<(f64, f64)>,
    pub sampling_number: (f64, f64),
    pub grad_evals: (f64, f64),
    pub grad_evals_vs_sam: f64,
    pub ais: Option<(f64, f64)>,
    pub excluded: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub rows: Vec<ReportRow>,
    /// Directories that were skipped, with the reason.
    pub warnings: Vec<String>,
}

/// Groups completed runs by label and reports mean ± population σ.
pub fn compare_report(paths: &[PathBuf]) -> Result<ComparisonReport> {
    let mut groups: BTreeMap<(String, String), (Vec<RunSummary>, Vec<String>)> = BTreeMap::new();
    let mut order: Vec<(String, String)> = Vec::new();
    let mut warnings = Vec::new();
    for path in paths {
        let dirs = run_dirs(path)?;
        if dirs.is_empty() {
            warnings.push(format!("{}: no run directories", path.display()));
        }
        for dir in dirs {
            let complete = !dir.join("ERROR").exists();
            match RunSummary::load(&dir.join("summary.toml")) {
                Ok(s) if complete => {
                    let key = (s.label.clone(), s.method.clone());
                    if !groups.contains_key(&key) {
                        order.push(key.clone());
                    }
                    groups.entry(key).or_default().0.push(s);
                }
                Ok(_) | Err(_) => {
                    warnings.push(format!("{}: incomplete run excluded", dir.display()));
                }
            }
        }
    }
    if groups.values().map(|g| g.0.len()).sum::<usize>() < 2 {
        return Err(Error::Precondition(
            "comparison needs at least two completed runs".into(),
        ));
    }
    let rows = order
        .into_iter()
        .map(|key| {
            let (runs, excluded) = groups.remove(&key).unwrap();
            let col = |f: &dyn Fn(&RunSummary) -> Option<f64>| {
                let v: Vec<f64> = runs.iter().filter_map(f).collect();
                (v.len() == runs.len()).then(|| mean_std(&v))
            };
            ReportRow {
                label: key.0,
                method: key.1,
                runs: runs.len(),
                accuracy: col(&|r| r.final_accuracy.map(|a| 100.0 * a)),
                sampling_number: col(&|r| Some(r.sampling_number as f64)).unwrap(),
                grad_evals: col(&|r| Some(r.grad_evals as f64)).unwrap(),
                grad_evals_vs_sam: col(&|r| Some(r.grad_evals_vs_sam)).unwrap().0,
                ais: col(&|r| r.ais),
                excluded,
            }
        })
        .collect();
    Ok(ComparisonReport { rows, warnings })
}

fn best_index(
    rows: &[ReportRow],
    key: impl Fn(&ReportRow) -> Option<f64>,
    larger: bool,
) -> Option<usize> {
    rows.iter()
        .enumerate()
        .filter_map(|(i, r)| key(r).map(|v| (i, v)))
        .max_by(|a, b| {
            let o = a.1.total_cmp(&b.1);
            if larger {
                o
            } else {
                o.reverse()
            }
        })
        .map(|(i, _)| i)
}

impl ComparisonReport {
    /// Fixed-width table; `*` marks the best accuracy (highest), sampling
    /// number (lowest) and AIS (highest).
    pub fn to_text(&self) -> String {
        let best_acc = best_index(&self.rows, |r| r.accuracy.map(|a| a.0), true);
        let best_samp = best_index(&self.rows, |r| Some(r.sampling_number.0), false);
        let best_ais = best_index(&self.rows, |r| r.ais.map(|a| a.0), true);
        let pm = |v: Option<(f64, f64)>, prec: usize, best: bool| match v {
            Some((m, s)) => format!("{m:.prec$} ± {s:.prec$}{}", if best { "*" } else { "" }),
            None => "-".into(),
        };
        let mut out = format!(
            "{:<20} {:<8} {:>4}  {:>18}  {:>20}  {:>22}  {:>8}  {:>20}\n",
            "label",
            "method",
            "runs",
            "accuracy (%)",
            "sampling number",
            "grad evals",
            "vs SAM",
            "AIS"
        );
        for (i, r) in self.rows.iter().enumerate() {
            out.push_str(&format!(
                "{:<20} {:<8} {:>4}  {:>18}  {:>20}  {:>22}  {:>8.4}  {:>20}\n",
                r.label,
                r.method,
                r.runs,
                pm(r.accuracy, 2, best_acc == Some(i)),
                pm(Some(r.sampling_number), 1, best_samp == Some(i)),
                pm(Some(r.grad_evals), 1, false),
                r.grad_evals_vs_sam,
                pm(r.ais, 1, best_ais == Some(i)),
            ));
        }
        out.push_str("± is the population standard deviation over seeds\n");
        for w in &self.warnings {
            out.push_str(&format!("warning: {w}\n"));
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(REPORT_HEADER).expect("in-memory write");
        let f = |v: f64| format!("{v:.16e}");
        let opt = |v: Option<(f64, f64)>, k: usize| {
            v.map(|p| f(if k == 0 { p.0 } else { p.1 }))
                .unwrap_or_default()
        };
        for r in &self.rows {
            w.write_record([
                r.label.clone(),
                r.method.clone(),
                r.runs.to_string(),
                opt(r.accuracy, 0),
                opt(r.accuracy, 1),
                f(r.sampling_number.0),
                f(r.sampling_number.1),
                f(r.grad_evals.0),
                f(r.grad_evals.1),
                f(r.grad_evals_vs_sam),
                opt(r.ais, 0),
                opt(r.ais, 1),
                r.excluded.join(";"),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
    }
}
