//! Executes specs and persists their outputs.
//!
//! Every run gets a fresh directory holding `metrics.csv`, `record.json` and,
//! when training finished, `checkpoint.json`. Existing directories are never
//! reused, so earlier results are never overwritten.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use chl_core::baselines::{baseline_train, evaluate_mlp};
use chl_core::datasets::{
    load_mnist_family, make_autoencoder_pairs, make_bars_stripes, make_xor, Dataset, MnistFamily,
};
use chl_core::learning::{evaluate, train_observed};
use chl_core::metrics::{EvalSplit, MetricsRow};
use chl_core::pseudospectra::{compute_grid, contour_levels, Contour, GridSpec, PseudospectrumGrid};
use chl_core::{init_network, Mat, Rng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::checkpoint::Checkpoint;
use crate::error::{CliError, CliResult};
use crate::spec::{ConvergenceSpec, DataSpec, Experiment, ExperimentSpec, RunPlan};

/// Environment variable naming the dataset root.
pub const DATA_DIR_ENV: &str = "CHL_DATA_DIR";

pub const METRICS_HEADER: &str = "epoch,phase,mse,accuracy";

#[derive(Clone, Debug)]
pub struct RunOptions {
    /// Dataset root used when the spec does not name one.
    pub data_root: Option<PathBuf>,
    /// Replaces the spec's `output_dir`.
    pub output_dir: Option<PathBuf>,
    /// Worker threads for sweeps.
    pub jobs: usize,
    /// Print a line per metrics row to stderr.
    pub progress: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            data_root: None,
            output_dir: None,
            jobs: 1,
            progress: false,
        }
    }
}

impl RunOptions {
    /// Options with the dataset root taken from `CHL_DATA_DIR`.
    pub fn from_env() -> Self {
        RunOptions {
            data_root: std::env::var_os(DATA_DIR_ENV).map(PathBuf::from),
            ..RunOptions::default()
        }
    }

    fn output_root(&self, spec: &ExperimentSpec) -> PathBuf {
        self.output_dir
            .clone()
            .or_else(|| spec.output_dir.clone())
            .unwrap_or_else(|| PathBuf::from("runs"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    Diverged,
    Error,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub name: String,
    pub experiment: String,
    pub algorithm: String,
    pub spec_hash: String,
    pub seed: u64,
    pub axis_values: BTreeMap<String, Value>,
    pub status: Status,
    pub diverged: bool,
    /// Epoch (or batch) in which training stopped early.
    pub failed_epoch: Option<usize>,
    pub error: Option<String>,
    pub converged: Option<bool>,
    pub wall_clock_s: f64,
    pub rows: Vec<MetricsRow>,
    pub run_dir: PathBuf,
    pub checkpoint: Option<PathBuf>,
    /// Experiment-specific results, e.g. pseudospectrum summaries.
    pub extra: Option<Value>,
}

impl RunRecord {
    pub fn final_test_row(&self) -> Option<&MetricsRow> {
        self.rows.iter().rev().find(|r| r.phase == EvalSplit::Test)
    }
}

/// The outcome of training a spec in memory.
#[derive(Clone, Debug)]
pub struct Trained {
    pub rows: Vec<MetricsRow>,
    /// `(epoch, message, diverged)` when training stopped early.
    pub failure: Option<(usize, String, bool)>,
    pub checkpoint: Option<Checkpoint>,
}

#[derive(Clone, Debug)]
pub struct Pseudospectrum {
    pub matrix: Mat,
    pub grid: PseudospectrumGrid,
    pub contours: Vec<Contour>,
}

/// Resolves the dataset root: the spec's own root, then the runner's, then `./data`.
pub fn data_root(data: &DataSpec, fallback: Option<&Path>) -> PathBuf {
    data.root
        .clone()
        .or_else(|| fallback.map(Path::to_path_buf))
        .unwrap_or_else(|| PathBuf::from("data"))
}

fn family_dir(root: &Path, family: MnistFamily) -> CliResult<PathBuf> {
    let sub = match family {
        MnistFamily::Mnist => "mnist",
        MnistFamily::EmnistLetters => "emnist",
    };
    [root.join(sub), root.to_path_buf()]
        .into_iter()
        .find(|d| family.available(d))
        .ok_or_else(|| CliError::Io {
            path: root.join(sub).display().to_string(),
            message: format!("{} IDX files not found (set {DATA_DIR_ENV})", family.name()),
        })
}

/// Builds or loads the dataset of `experiment`.
pub fn load_dataset(experiment: Experiment, data: &DataSpec, fallback_root: Option<&Path>) -> CliResult<Dataset> {
    let root = data_root(data, fallback_root);
    let mnist = |family| -> CliResult<Dataset> {
        let dir = family_dir(&root, family)?;
        Ok(load_mnist_family(&dir, family, data.train_limit, data.test_limit)?)
    };
    let limit = |d: Dataset| -> CliResult<Dataset> {
        let train = data.train_limit.map_or(d.train.clone(), |n| d.train.truncated(n));
        let test = data.test_limit.map_or(d.test.clone(), |n| d.test.truncated(n));
        Ok(Dataset::new(d.name, train, test)?)
    };
    match experiment {
        Experiment::Xor => limit(make_xor()),
        Experiment::BarsStripes => limit(make_bars_stripes()),
        Experiment::Mnist => mnist(MnistFamily::Mnist),
        Experiment::Emnist => mnist(MnistFamily::EmnistLetters),
        Experiment::Autoencoder => Ok(make_autoencoder_pairs(&mnist(MnistFamily::Mnist)?)),
        Experiment::Pseudospectra => Err(CliError::Validation("pseudospectra has no dataset".into())),
    }
}

/// Trains `spec` on `data` without touching the filesystem.
pub fn train_spec(spec: &ExperimentSpec, data: &Dataset, mut observe: impl FnMut(&MetricsRow)) -> CliResult<Trained> {
    let layout = spec.layout()?;
    let hash = spec.hash();
    if spec.algorithm.is_baseline() {
        let cfg = spec.baseline_config()?;
        return match baseline_train(&layout, data, &cfg) {
            Ok(run) => {
                run.rows.iter().for_each(&mut observe);
                Ok(Trained {
                    checkpoint: Some(Checkpoint::from_mlp(&run.mlp, spec.experiment, cfg.accuracy, &hash, spec.seed)),
                    rows: run.rows,
                    failure: None,
                })
            }
            Err(e) if e.is_divergence() => Ok(Trained {
                rows: Vec::new(),
                failure: Some((0, e.to_string(), true)),
                checkpoint: None,
            }),
            Err(e) => Err(e.into()),
        };
    }

    let cfg = spec.trainer_config()?;
    let mut net = init_network(
        &layout,
        &spec.feedback_mode(),
        &spec.network.w_dist,
        &spec.network.bias,
        &mut Rng::new(spec.seed),
    )?;
    net.set_bias_adaptive(spec.network.bias_adaptive);
    match train_observed(&mut net, data, &cfg, observe) {
        Ok(rows) => Ok(Trained {
            rows,
            failure: None,
            checkpoint: Some(Checkpoint::from_network(
                &net,
                cfg.gamma,
                cfg.integrator,
                spec.experiment,
                cfg.accuracy,
                &hash,
                spec.seed,
            )),
        }),
        Err(e) if e.source.is_divergence() => Ok(Trained {
            rows: e.rows.clone(),
            failure: Some((e.epoch, e.to_string(), true)),
            checkpoint: None,
        }),
        Err(e) => Err(e.source.into()),
    }
}

/// The pseudospectrum of the spec's feedback matrix.
pub fn pseudospectrum(spec: &ExperimentSpec) -> CliResult<Pseudospectrum> {
    let p = spec
        .pseudospectra
        .as_ref()
        .ok_or_else(|| CliError::Validation("missing [pseudospectra] table".into()))?;
    let net = init_network(
        &spec.layout()?,
        &spec.feedback_mode(),
        &spec.network.w_dist,
        &spec.network.bias,
        &mut Rng::new(spec.seed),
    )?;
    let matrix = net.feedback(p.layer)?;
    let grid = compute_grid(&matrix, GridSpec::around(&matrix, p.points, p.margin))?;
    let contours = contour_levels(&grid, &p.levels)?;
    Ok(Pseudospectrum { matrix, grid, contours })
}

pub fn converged(rows: &[MetricsRow], c: &ConvergenceSpec) -> bool {
    let late: Vec<&MetricsRow> = rows
        .iter()
        .filter(|r| r.phase == EvalSplit::Test && r.epoch >= c.by_epoch)
        .collect();
    !late.is_empty() && late.iter().all(|r| r.accuracy >= c.accuracy)
}

pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(out, "{},{},{:.16e},{:.16e}", r.epoch, r.phase.as_str(), r.mse, r.accuracy);
    }
    out
}

/// Creates `parent/stem`, or `parent/stem-2`, `-3`, … if taken.
pub fn fresh_dir(parent: &Path, stem: &str) -> CliResult<PathBuf> {
    std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    for n in 1.. {
        let dir = if n == 1 {
            parent.join(stem)
        } else {
            parent.join(format!("{stem}-{n}"))
        };
        match std::fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(CliError::io(&dir, e)),
        }
    }
    unreachable!()
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> CliResult<()> {
    std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

fn write_json(path: &Path, value: &impl Serialize) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).expect("record serializes");
    text.push('\n');
    write(path, text)
}

/// Executes one resolved spec into `dir`.
fn execute_into(
    spec: &ExperimentSpec,
    axis_values: BTreeMap<String, Value>,
    dir: &Path,
    opts: &RunOptions,
) -> CliResult<RunRecord> {
    let start = Instant::now();
    write(&dir.join("spec.toml"), toml::to_string(spec).map_err(|e| CliError::Validation(e.to_string()))?)?;
    let mut record = RunRecord {
        name: spec.name.clone(),
        experiment: spec.experiment.as_str().into(),
        algorithm: spec.algorithm.as_str().into(),
        spec_hash: spec.hash(),
        seed: spec.seed,
        axis_values,
        status: Status::Ok,
        diverged: false,
        failed_epoch: None,
        error: None,
        converged: None,
        wall_clock_s: 0.0,
        rows: Vec::new(),
        run_dir: dir.to_path_buf(),
        checkpoint: None,
        extra: None,
    };

    if spec.experiment == Experiment::Pseudospectra {
        let ps = pseudospectrum(spec)?;
        write(&dir.join("grid.csv"), ps.grid.to_csv())?;
        write_json(&dir.join("contours.json"), &ps.contours)?;
        record.extra = Some(serde_json::json!({
            "shape": [ps.matrix.rows(), ps.matrix.cols()],
            "grid": ps.grid.spec,
            "min_sigma": ps.grid.min_value(),
            "segments_per_level": ps.contours.iter().map(|c| (c.level, c.lines.len())).collect::<Vec<_>>(),
        }));
    } else {
        let data = load_dataset(spec.experiment, &spec.data, opts.data_root.as_deref())?;
        let label = format!("{}:{}", spec.name, record.spec_hash.get(..8).unwrap_or(""));
        let progress = opts.progress;
        let trained = train_spec(spec, &data, |r| {
            if progress {
                eprintln!("[{label}] epoch {} {} mse {:.6e} acc {:.4}", r.epoch, r.phase.as_str(), r.mse, r.accuracy);
            }
        })?;
        write(&dir.join("metrics.csv"), metrics_csv(&trained.rows))?;
        if let Some(ckpt) = &trained.checkpoint {
            let path = dir.join("checkpoint.json");
            ckpt.save(&path)?;
            record.checkpoint = Some(path);
        }
        if let Some((epoch, message, diverged)) = trained.failure {
            record.status = if diverged { Status::Diverged } else { Status::Error };
            record.diverged = diverged;
            record.failed_epoch = Some(epoch);
            record.error = Some(message);
        }
        record.converged = spec
            .convergence
            .as_ref()
            .map(|c| !record.diverged && converged(&trained.rows, c));
        record.rows = trained.rows;
    }
    record.wall_clock_s = start.elapsed().as_secs_f64();
    write_json(&dir.join("record.json"), &record)?;
    Ok(record)
}

/// Runs a spec without sweep axes.
pub fn run(spec: &ExperimentSpec, opts: &RunOptions) -> CliResult<RunRecord> {
    spec.validate()?;
    if !spec.sweep.is_empty() {
        return Err(CliError::Validation("spec has sweep axes; use the sweep verb".into()));
    }
    let hash = spec.hash();
    let dir = fresh_dir(&opts.output_root(spec), &format!("{}-{}", spec.name, &hash[..12]))?;
    execute_into(spec, BTreeMap::new(), &dir, opts)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepRecord {
    pub name: String,
    pub spec_hash: String,
    pub sweep_dir: PathBuf,
    pub runs: Vec<RunRecord>,
}

/// Runs every point of the spec's sweep on a pool of `opts.jobs` workers.
/// A failing run is recorded with its error; the others proceed.
pub fn sweep(spec: &ExperimentSpec, opts: &RunOptions) -> CliResult<SweepRecord> {
    spec.validate()?;
    let plans = spec.expand()?;
    let hash = spec.hash();
    let sweep_dir = fresh_dir(&opts.output_root(spec), &format!("{}-sweep-{}", spec.name, &hash[..12]))?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.jobs.max(1))
        .build()
        .map_err(|e| CliError::Validation(format!("worker pool: {e}")))?;
    let runs: Vec<RunRecord> = pool.install(|| {
        plans
            .par_iter()
            .enumerate()
            .map(|(i, plan)| run_plan(i, plan, &sweep_dir, opts))
            .collect()
    });

    write(&sweep_dir.join("summary.csv"), summary_csv(&runs))?;
    let record = SweepRecord {
        name: spec.name.clone(),
        spec_hash: hash,
        sweep_dir,
        runs,
    };
    write_json(&record.sweep_dir.join("sweep.json"), &record)?;
    Ok(record)
}

fn run_plan(i: usize, plan: &RunPlan, sweep_dir: &Path, opts: &RunOptions) -> RunRecord {
    let hash = plan.spec.hash();
    let stem = format!("{i:03}-{}", &hash[..12]);
    let dir = match fresh_dir(sweep_dir, &stem) {
        Ok(dir) => dir,
        Err(e) => return error_record(plan, &hash, &sweep_dir.join(&stem), &e),
    };
    match execute_into(&plan.spec, plan.axis_values.clone(), &dir, opts) {
        Ok(record) => record,
        Err(e) => {
            let record = error_record(plan, &hash, &dir, &e);
            // The record is best effort; the sweep summary still lists the failure.
            let _ = write_json(&dir.join("record.json"), &record);
            record
        }
    }
}

fn error_record(plan: &RunPlan, hash: &str, dir: &Path, e: &CliError) -> RunRecord {
    let diverged = e.exit_code() == crate::error::EXIT_DIVERGED;
    RunRecord {
        name: plan.spec.name.clone(),
        experiment: plan.spec.experiment.as_str().into(),
        algorithm: plan.spec.algorithm.as_str().into(),
        spec_hash: hash.into(),
        seed: plan.spec.seed,
        axis_values: plan.axis_values.clone(),
        status: if diverged { Status::Diverged } else { Status::Error },
        diverged,
        failed_epoch: None,
        error: Some(e.to_string()),
        converged: plan.spec.convergence.as_ref().map(|_| false),
        wall_clock_s: 0.0,
        rows: Vec::new(),
        run_dir: dir.to_path_buf(),
        checkpoint: None,
        extra: None,
    }
}

fn summary_csv(runs: &[RunRecord]) -> String {
    let mut out = String::from("run,axes,seed,status,final_epoch,final_mse,final_accuracy,converged\n");
    for (i, r) in runs.iter().enumerate() {
        let axes = crate::spec::canonical_json(&Value::Object(
            r.axis_values.iter().map(|(k, v)| (k.clone(), v.clone())).collect(),
        ));
        let last = r.final_test_row();
        let _ = writeln!(
            out,
            "{i},\"{}\",{},{},{},{},{},{}",
            axes.replace('"', "\"\""),
            r.seed,
            serde_json::to_value(r.status).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default(),
            last.map_or(String::new(), |l| l.epoch.to_string()),
            last.map_or(String::new(), |l| format!("{:.16e}", l.mse)),
            last.map_or(String::new(), |l| format!("{:.16e}", l.accuracy)),
            r.converged.map_or(String::new(), |c| c.to_string()),
        );
    }
    out
}

/// Human-readable table of a sweep.
pub fn summary_table(record: &SweepRecord) -> String {
    let mut out = format!("{:<4} {:<44} {:<9} {:>8} {:>12} {:>9} {:>9}\n", "run", "axes", "status", "epoch", "mse", "accuracy", "converged");
    for (i, r) in record.runs.iter().enumerate() {
        let axes: Vec<String> = r.axis_values.iter().map(|(k, v)| format!("{k}={v}")).collect();
        let last = r.final_test_row();
        let status = match r.status {
            Status::Ok => "ok",
            Status::Diverged => "diverged",
            Status::Error => "error",
        };
        let _ = writeln!(
            out,
            "{i:<4} {:<44} {status:<9} {:>8} {:>12} {:>9} {:>9}",
            axes.join(" "),
            last.map_or("-".into(), |l| l.epoch.to_string()),
            last.map_or("-".into(), |l| format!("{:.4e}", l.mse)),
            last.map_or("-".into(), |l| format!("{:.4}", l.accuracy)),
            r.converged.map_or("-".into(), |c| c.to_string()),
        );
    }
    out
}

/// Pseudospectra of the spec, swept over its axes when it has any.
pub fn pseudospectra(spec: &ExperimentSpec, opts: &RunOptions) -> CliResult<Vec<RunRecord>> {
    spec.validate()?;
    if spec.experiment != Experiment::Pseudospectra {
        return Err(CliError::Validation(format!(
            "pseudospectra verb needs experiment = \"pseudospectra\", got {:?}",
            spec.experiment.as_str()
        )));
    }
    if spec.sweep.is_empty() {
        run(spec, opts).map(|r| vec![r])
    } else {
        sweep(spec, opts).map(|s| s.runs)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dataset: String,
    pub samples: usize,
    pub mse: f64,
    pub accuracy: f64,
}

/// Test-split MSE and accuracy of a checkpoint on a named dataset.
pub fn eval_checkpoint(ckpt: &Checkpoint, dataset: &str, data: &DataSpec, fallback_root: Option<&Path>) -> CliResult<EvalReport> {
    let experiment = Experiment::parse(dataset)
        .filter(|e| *e != Experiment::Pseudospectra)
        .ok_or_else(|| CliError::Validation(format!("unknown dataset {dataset:?}")))?;
    let (input, output) = experiment.io_widths().expect("dataset experiments have widths");
    let layout = ckpt.layout();
    if layout.first() != Some(&input) || layout.last() != Some(&output) {
        return Err(CliError::Validation(format!("checkpoint layout {layout:?} does not fit dataset {dataset}")));
    }
    let data = DataSpec {
        train_limit: Some(data.train_limit.unwrap_or(1)),
        ..data.clone()
    };
    let set = load_dataset(experiment, &data, fallback_root)?;
    let (mse, accuracy) = match &ckpt.model {
        crate::checkpoint::Model::Chl { gamma, integrator, .. } => {
            evaluate(&ckpt.network()?, &set.test, integrator, *gamma, ckpt.accuracy)?
        }
        crate::checkpoint::Model::Mlp { .. } => evaluate_mlp(&ckpt.mlp()?, &set.test, ckpt.accuracy)?,
    };
    Ok(EvalReport {
        dataset: experiment.as_str().into(),
        samples: set.test.len(),
        mse,
        accuracy,
    })
}
