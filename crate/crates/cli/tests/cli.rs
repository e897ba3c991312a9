use std::path::{Path, PathBuf};
use std::process::Command;

use chl_cli::runner::{eval_checkpoint, metrics_csv, Status, METRICS_HEADER};
use chl_cli::spec::DataSpec;
use chl_cli::{run, sweep, Checkpoint, ExperimentSpec, RunOptions};
use proptest::prelude::*;

fn presets() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../experiments")
}

fn chl() -> Command {
    Command::new(env!("CARGO_BIN_EXE_chl"))
}

/// A short rCHL XOR run, cheap enough to repeat.
const SHORT_XOR: &str = r#"
schema = 1
name = "short-xor"
experiment = "xor"
algorithm = "rchl"
layout = [2, 2, 1]
seed = 3

[network]
w_dist = { kind = "uniform", low = 0.0, high = 1.0 }
g_dist = { kind = "uniform", low = -0.2, high = 0.2 }
bias = { kind = "random", dist = { kind = "uniform", low = -0.1, high = 0.1 } }
bias_adaptive = true

[trainer]
eta = 0.1
gamma = 0.05
epochs = 6
samples_per_epoch = { draw = 8 }
eval_every = 2
t_f = 4.0
accuracy = { kind = "threshold", epsilon = 0.01 }
"#;

fn opts(out: &Path) -> RunOptions {
    RunOptions {
        output_dir: Some(out.to_path_buf()),
        ..RunOptions::default()
    }
}

#[test]
fn every_preset_parses_and_validates() {
    let mut names = Vec::new();
    for entry in std::fs::read_dir(presets()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let spec = ExperimentSpec::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            if !spec.sweep.is_empty() {
                assert!(!spec.expand().unwrap().is_empty());
            }
            names.push(spec.name);
        }
    }
    names.sort();
    let before = names.len();
    names.dedup();
    assert_eq!(before, names.len(), "preset names must be unique");
    for required in [
        "xor-rchl",
        "xor-chl",
        "bars-stripes",
        "bars-gamma",
        "bars-eta",
        "bars-depth",
        "bars-gdist",
        "mnist-rchl",
        "emnist-rchl",
        "autoencoder-20",
        "autoencoder-40",
        "pseudospectra",
        "xor-bp",
        "xor-fda",
    ] {
        assert!(names.iter().any(|n| n == required), "missing preset {required}");
    }
}

#[test]
fn depth_sweep_covers_the_four_layouts() {
    let spec = ExperimentSpec::load(&presets().join("bars_depth_sweep.toml")).unwrap();
    let layouts: Vec<Vec<usize>> = spec.expand().unwrap().into_iter().map(|p| p.spec.layout).collect();
    assert_eq!(
        layouts,
        vec![
            vec![16, 50, 2],
            vec![16, 50, 10, 2],
            vec![16, 50, 20, 10, 2],
            vec![16, 50, 30, 20, 10, 2]
        ]
    );
}

#[test]
fn gdist_sweep_has_sixteen_of_each_family() {
    let spec = ExperimentSpec::load(&presets().join("bars_gdist_sweep.toml")).unwrap();
    let plans = spec.expand().unwrap();
    let normal = plans
        .iter()
        .filter(|p| matches!(p.spec.network.g_dist, chl_core::DistSpec::Normal { .. }))
        .count();
    assert_eq!((normal, plans.len() - normal), (16, 16));
}

#[test]
fn run_writes_outputs_and_never_overwrites() {
    let dir = tempfile::tempdir().unwrap();
    let spec = ExperimentSpec::from_toml(SHORT_XOR).unwrap();
    let a = run(&spec, &opts(dir.path())).unwrap();
    let b = run(&spec, &opts(dir.path())).unwrap();
    assert_ne!(a.run_dir, b.run_dir);
    for r in [&a, &b] {
        assert_eq!(r.status, Status::Ok);
        for f in ["metrics.csv", "record.json", "checkpoint.json", "spec.toml"] {
            assert!(r.run_dir.join(f).is_file(), "{f} missing in {}", r.run_dir.display());
        }
    }
    let csv = std::fs::read_to_string(a.run_dir.join("metrics.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some(METRICS_HEADER));
    assert_eq!(csv.lines().count(), 1 + 3);
    assert_eq!(csv, std::fs::read_to_string(b.run_dir.join("metrics.csv")).unwrap());

    // The stored spec reproduces the run.
    let stored = ExperimentSpec::load(&a.run_dir.join("spec.toml")).unwrap();
    assert_eq!(stored.hash(), spec.hash());
}

#[test]
fn checkpoint_reproduces_final_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let spec = ExperimentSpec::from_toml(SHORT_XOR).unwrap();
    let record = run(&spec, &opts(dir.path())).unwrap();
    let path = record.checkpoint.clone().unwrap();
    let bytes = std::fs::read(&path).unwrap();
    let ckpt = Checkpoint::from_bytes(&bytes).unwrap();
    assert_eq!(ckpt.to_bytes().unwrap(), bytes);

    let report = eval_checkpoint(&ckpt, "xor", &DataSpec::default(), None).unwrap();
    let last = record.final_test_row().unwrap();
    assert_eq!(report.mse.to_bits(), last.mse.to_bits());
    assert_eq!(report.accuracy, last.accuracy);
}

#[test]
fn baseline_checkpoint_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = ExperimentSpec::load(&presets().join("xor_fda.toml")).unwrap();
    spec.baseline.as_mut().unwrap().batches = 300;
    spec.baseline.as_mut().unwrap().eval_every = 100;
    let record = run(&spec, &opts(dir.path())).unwrap();
    assert_eq!(record.rows.len(), 3);
    let ckpt = Checkpoint::load(record.checkpoint.as_ref().unwrap()).unwrap();
    assert!(!ckpt.mlp().unwrap().backward().is_empty());
    let report = eval_checkpoint(&ckpt, "xor", &DataSpec::default(), None).unwrap();
    assert_eq!(report.mse.to_bits(), record.final_test_row().unwrap().mse.to_bits());
}

#[test]
fn sweep_isolates_failures_and_derives_distinct_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!("{SHORT_XOR}\n[[sweep]]\nparam = \"trainer.eta\"\nvalues = [0.1, 0.2, 0.3]\n");
    let spec = ExperimentSpec::from_toml(&text).unwrap();
    let record = sweep(
        &spec,
        &RunOptions {
            jobs: 2,
            ..opts(dir.path())
        },
    )
    .unwrap();
    assert_eq!(record.runs.len(), 3);
    assert!(record.runs.iter().all(|r| r.status == Status::Ok));
    let seeds: std::collections::HashSet<u64> = record.runs.iter().map(|r| r.seed).collect();
    assert_eq!(seeds.len(), 3);
    assert!(record.sweep_dir.join("summary.csv").is_file());

    // A zero sample limit fails validation for one point only.
    let bad = format!("{SHORT_XOR}\n[[sweep]]\nparam = \"data.train_limit\"\nvalues = [2, 0]\n");
    let spec = ExperimentSpec::from_toml(&bad).unwrap();
    let record = sweep(&spec, &opts(dir.path())).unwrap();
    assert_eq!(record.runs[0].status, Status::Ok);
    assert_eq!(record.runs[1].status, Status::Error);
    assert!(record.runs[1].error.is_some());
}

#[test]
fn divergence_is_recorded_with_exit_code_three() {
    let dir = tempfile::tempdir().unwrap();
    // The hidden-layer update is scaled by 1/gamma, which overflows at this rate.
    let text = SHORT_XOR.replace("eta = 0.1", "eta = 1e308");
    let spec_path = dir.path().join("diverge.toml");
    std::fs::write(&spec_path, &text).unwrap();
    let out = chl()
        .args(["run", spec_path.to_str().unwrap(), "-q", "--out"])
        .arg(dir.path().join("runs"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let record: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(record["diverged"], true);
    assert_eq!(record["status"], "diverged");
}

#[test]
fn exit_codes_for_validation_and_missing_files() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, SHORT_XOR.replace("layout = [2, 2, 1]", "layout = [2, 2, 3]")).unwrap();
    let code = |args: &[&str]| chl().args(args).output().unwrap().status.code();
    assert_eq!(code(&["run", bad.to_str().unwrap()]), Some(2));
    assert_eq!(code(&["sweep", bad.to_str().unwrap()]), Some(2));
    assert_eq!(code(&["frobnicate"]), Some(2));
    assert_eq!(code(&["run", dir.path().join("absent.toml").to_str().unwrap()]), Some(1));

    // A spec without axes is not a sweep.
    let good = dir.path().join("good.toml");
    std::fs::write(&good, SHORT_XOR).unwrap();
    assert_eq!(code(&["sweep", good.to_str().unwrap()]), Some(2));

    // Corrupted checkpoint header.
    let ckpt = dir.path().join("ckpt.json");
    std::fs::write(&ckpt, "{\"format\":\"something-else\",\"version\":1}").unwrap();
    assert_eq!(code(&["eval", ckpt.to_str().unwrap(), "xor"]), Some(2));
}

#[test]
fn mnist_needs_data_root() {
    let dir = tempfile::tempdir().unwrap();
    let spec = ExperimentSpec::load(&presets().join("mnist_rchl.toml")).unwrap();
    let out = chl()
        .args(["run", presets().join("mnist_rchl.toml").to_str().unwrap(), "-q", "--out"])
        .arg(dir.path())
        .env("CHL_DATA_DIR", dir.path().join("nowhere"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("not found"));
    assert!(run(
        &spec,
        &RunOptions {
            data_root: Some(dir.path().join("nowhere")),
            ..opts(dir.path())
        }
    )
    .is_err());
}

#[test]
fn cli_run_and_eval_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let spec_path = dir.path().join("xor.toml");
    std::fs::write(&spec_path, SHORT_XOR).unwrap();
    let out = chl()
        .args(["run", spec_path.to_str().unwrap(), "-q", "--out"])
        .arg(dir.path().join("runs"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let record: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let ckpt = record["checkpoint"].as_str().unwrap();
    let eval = chl().args(["eval", ckpt, "xor"]).output().unwrap();
    assert_eq!(eval.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_slice(&eval.stdout).unwrap();
    assert_eq!(report["samples"], 4);
    assert_eq!(report["mse"], record["rows"][2]["mse"]);
}

#[test]
fn pseudospectra_verb_writes_grid_and_contours() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(presets().join("pseudospectra.toml"))
        .unwrap()
        .replace("points = 101", "points = 21");
    let spec_path = dir.path().join("ps.toml");
    std::fs::write(&spec_path, text).unwrap();
    let out = chl()
        .args(["pseudospectra", spec_path.to_str().unwrap(), "--out"])
        .arg(dir.path().join("runs"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let dirs: Vec<&str> = std::str::from_utf8(&out.stdout).unwrap().lines().collect();
    assert_eq!(dirs.len(), 6);
    for d in dirs {
        let grid = std::fs::read_to_string(Path::new(d).join("grid.csv")).unwrap();
        assert_eq!(grid.lines().next(), Some("re,im,sigma_min"));
        assert_eq!(grid.lines().count(), 1 + 21 * 21);
        let contours: serde_json::Value =
            serde_json::from_slice(&std::fs::read(Path::new(d).join("contours.json")).unwrap()).unwrap();
        assert_eq!(contours.as_array().unwrap().len(), 36);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn metrics_csv_round_trips_exactly(
        rows in prop::collection::vec((1usize..100_000, any::<bool>(), 0.0f64..10.0, 0.0f64..=1.0), 0..20)
    ) {
        use chl_core::metrics::{EvalSplit, MetricsRow};
        let rows: Vec<MetricsRow> = rows
            .into_iter()
            .map(|(epoch, train, mse, accuracy)| MetricsRow {
                epoch,
                phase: if train { EvalSplit::Train } else { EvalSplit::Test },
                mse,
                accuracy,
            })
            .collect();
        let csv = metrics_csv(&rows);
        let parsed: Vec<(usize, String, f64, f64)> = csv
            .lines()
            .skip(1)
            .map(|l| {
                let f: Vec<&str> = l.split(',').collect();
                (f[0].parse().unwrap(), f[1].to_string(), f[2].parse().unwrap(), f[3].parse().unwrap())
            })
            .collect();
        prop_assert_eq!(parsed.len(), rows.len());
        for (p, r) in parsed.iter().zip(&rows) {
            prop_assert_eq!(p.0, r.epoch);
            prop_assert_eq!(p.1.as_str(), r.phase.as_str());
            prop_assert_eq!(p.2.to_bits(), r.mse.to_bits());
            prop_assert_eq!(p.3.to_bits(), r.accuracy.to_bits());
        }
    }

    #[test]
    fn spec_hash_is_stable_under_table_reordering(eta in 0.001f64..1.0, gamma in 0.001f64..1.0, seed in 0u64..1_000_000) {
        let text = SHORT_XOR
            .replace("eta = 0.1", &format!("eta = {eta:?}"))
            .replace("gamma = 0.05", &format!("gamma = {gamma:?}"))
            .replace("seed = 3", &format!("seed = {seed}"));
        let a = ExperimentSpec::from_toml(&text).unwrap();
        // Move [trainer] ahead of [network].
        let (head, rest) = text.split_at(text.find("[network]").unwrap());
        let (network, trainer) = rest.split_at(rest.find("[trainer]").unwrap());
        let b = ExperimentSpec::from_toml(&format!("{head}{trainer}\n{network}")).unwrap();
        prop_assert_eq!(a.hash(), b.hash());
    }
}
