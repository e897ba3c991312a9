//! Experiment specification files.
//!
//! A spec is a TOML document. Sweep axes name a dotted path into the spec
//! (`trainer.gamma`, `layout`, `network.g_dist`) and a list of values; each
//! point of the Cartesian product is a fully resolved single-run spec.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chl_core::baselines::{Algorithm as BaselineAlgorithm, BaselineConfig};
use chl_core::learning::{SamplesPerEpoch, TrainerConfig};
use chl_core::metrics::AccuracyMode;
use chl_core::{BiasInit, DistSpec, FeedbackMode, IntegratorConfig, Layout};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Xor,
    BarsStripes,
    Mnist,
    Emnist,
    Autoencoder,
    Pseudospectra,
}

impl Experiment {
    pub fn as_str(self) -> &'static str {
        match self {
            Experiment::Xor => "xor",
            Experiment::BarsStripes => "bars_stripes",
            Experiment::Mnist => "mnist",
            Experiment::Emnist => "emnist",
            Experiment::Autoencoder => "autoencoder",
            Experiment::Pseudospectra => "pseudospectra",
        }
    }

    /// Input and target widths of the experiment's dataset.
    pub fn io_widths(self) -> Option<(usize, usize)> {
        match self {
            Experiment::Xor => Some((2, 1)),
            Experiment::BarsStripes => Some((16, 2)),
            Experiment::Mnist => Some((784, 10)),
            Experiment::Emnist => Some((784, 26)),
            Experiment::Autoencoder => Some((784, 784)),
            Experiment::Pseudospectra => None,
        }
    }

    pub fn parse(name: &str) -> Option<Experiment> {
        serde_json::from_value(Value::String(name.to_string())).ok()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Chl,
    Rchl,
    Bp,
    Fda,
}

impl Algorithm {
    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Chl => "chl",
            Algorithm::Rchl => "rchl",
            Algorithm::Bp => "bp",
            Algorithm::Fda => "fda",
        }
    }

    pub fn is_baseline(self) -> bool {
        matches!(self, Algorithm::Bp | Algorithm::Fda)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    #[serde(default = "default_w_dist")]
    pub w_dist: DistSpec,
    /// Distribution of the fixed feedback matrices (rCHL only).
    #[serde(default = "default_w_dist")]
    pub g_dist: DistSpec,
    #[serde(default)]
    pub bias: BiasInit,
    #[serde(default)]
    pub bias_adaptive: bool,
}

impl Default for NetworkSpec {
    fn default() -> Self {
        NetworkSpec {
            w_dist: default_w_dist(),
            g_dist: default_w_dist(),
            bias: BiasInit::Zero,
            bias_adaptive: false,
        }
    }
}

fn default_w_dist() -> DistSpec {
    DistSpec::Uniform {
        low: -0.5,
        high: 0.5,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainerSpec {
    pub eta: f64,
    pub gamma: f64,
    pub epochs: usize,
    pub samples_per_epoch: SamplesPerEpoch,
    pub eval_every: usize,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_t_f")]
    pub t_f: f64,
    pub accuracy: AccuracyMode,
    #[serde(default)]
    pub eval_train: bool,
}

fn default_dt() -> f64 {
    IntegratorConfig::default().dt
}

fn default_t_f() -> f64 {
    IntegratorConfig::default().t_f
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineSpec {
    pub eta: f64,
    #[serde(default)]
    pub momentum: f64,
    pub batch_size: usize,
    pub batches: usize,
    pub w_dist: DistSpec,
    pub b_dist: DistSpec,
    /// Fixed backward matrices (FDA only).
    pub backward_dist: DistSpec,
    pub eval_every: usize,
    pub accuracy: AccuracyMode,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSpec {
    /// Dataset root; falls back to the runner's root (normally `CHL_DATA_DIR`).
    #[serde(default)]
    pub root: Option<PathBuf>,
    /// Use only the first `n` training samples.
    #[serde(default)]
    pub train_limit: Option<usize>,
    #[serde(default)]
    pub test_limit: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PseudospectraSpec {
    /// Feedback matrix into this layer.
    #[serde(default = "one")]
    pub layer: usize,
    #[serde(default = "default_points")]
    pub points: usize,
    #[serde(default = "default_margin")]
    pub margin: f64,
    /// Contour levels as `log10(ε)`, ascending.
    pub levels: Vec<f64>,
}

fn one() -> usize {
    1
}

fn default_points() -> usize {
    chl_core::pseudospectra::DEFAULT_POINTS
}

fn default_margin() -> f64 {
    chl_core::pseudospectra::DEFAULT_MARGIN
}

/// A run converges when every test row from `by_epoch` on has at least
/// `accuracy`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceSpec {
    pub accuracy: f64,
    pub by_epoch: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub param: String,
    pub values: Vec<Value>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub schema: u32,
    pub name: String,
    pub experiment: Experiment,
    pub algorithm: Algorithm,
    pub layout: Vec<usize>,
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub network: NetworkSpec,
    #[serde(default)]
    pub trainer: Option<TrainerSpec>,
    #[serde(default)]
    pub baseline: Option<BaselineSpec>,
    #[serde(default)]
    pub data: DataSpec,
    #[serde(default)]
    pub pseudospectra: Option<PseudospectraSpec>,
    #[serde(default)]
    pub convergence: Option<ConvergenceSpec>,
    #[serde(default)]
    pub sweep: Vec<Axis>,
}

/// One point of a sweep: the resolved spec and the axis values that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct RunPlan {
    pub spec: ExperimentSpec,
    pub axis_values: BTreeMap<String, Value>,
}

impl ExperimentSpec {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        let spec: ExperimentSpec =
            toml::from_str(text).map_err(|e| CliError::Validation(format!("spec: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            CliError::Validation(m) => CliError::Validation(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn layout(&self) -> CliResult<Layout> {
        Ok(Layout::new(self.layout.clone())?)
    }

    pub fn feedback_mode(&self) -> FeedbackMode {
        match self.algorithm {
            Algorithm::Rchl => FeedbackMode::Random {
                dist: self.network.g_dist,
            },
            _ => FeedbackMode::Transpose,
        }
    }

    pub fn trainer_config(&self) -> CliResult<TrainerConfig> {
        let t = self
            .trainer
            .as_ref()
            .ok_or_else(|| CliError::Validation(format!("{} needs a [trainer] table", self.algorithm.as_str())))?;
        let cfg = TrainerConfig {
            eta: t.eta,
            gamma: t.gamma,
            epochs: t.epochs,
            samples_per_epoch: t.samples_per_epoch,
            eval_every: t.eval_every,
            integrator: IntegratorConfig::new(t.dt, t.t_f)?,
            seed: self.seed,
            accuracy: t.accuracy,
            eval_train: t.eval_train,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn baseline_config(&self) -> CliResult<BaselineConfig> {
        let b = self
            .baseline
            .as_ref()
            .ok_or_else(|| CliError::Validation(format!("{} needs a [baseline] table", self.algorithm.as_str())))?;
        let algorithm = match self.algorithm {
            Algorithm::Fda => BaselineAlgorithm::Fda,
            _ => BaselineAlgorithm::Bp,
        };
        let cfg = BaselineConfig {
            algorithm,
            eta: b.eta,
            momentum: b.momentum,
            batch_size: b.batch_size,
            batches: b.batches,
            w_dist: b.w_dist,
            b_dist: b.b_dist,
            backward_dist: b.backward_dist,
            seed: self.seed,
            eval_every: b.eval_every,
            accuracy: b.accuracy,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks everything that can be checked without touching data files.
    pub fn validate(&self) -> CliResult<()> {
        let invalid = |m: String| Err(CliError::Validation(m));
        if self.schema != SCHEMA_VERSION {
            return invalid(format!("unsupported schema {} (expected {SCHEMA_VERSION})", self.schema));
        }
        if self.name.is_empty() || !self.name.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c)) {
            return invalid(format!("name {:?} must be non-empty and use [A-Za-z0-9._-]", self.name));
        }
        let layout = self.layout()?;
        if let Some((input, output)) = self.experiment.io_widths() {
            if layout.input_width() != input || layout.output_width() != output {
                return invalid(format!(
                    "layout {layout} does not fit {}: needs input {input} and output {output}",
                    self.experiment.as_str()
                ));
            }
        }
        self.network.w_dist.validate()?;
        if self.algorithm == Algorithm::Rchl {
            self.network.g_dist.validate()?;
        }
        if let BiasInit::Random { dist } = self.network.bias {
            dist.validate()?;
        }

        if self.experiment == Experiment::Pseudospectra {
            let p = self.pseudospectra.as_ref().ok_or_else(|| {
                CliError::Validation("pseudospectra experiment needs a [pseudospectra] table".into())
            })?;
            if self.algorithm.is_baseline() {
                return invalid("pseudospectra analyses chl or rchl feedback".into());
            }
            if p.layer == 0 || p.layer >= layout.depth() {
                return invalid(format!("pseudospectra layer must lie in 1..{}", layout.depth()));
            }
            if p.points < 2 || !(p.margin.is_finite() && p.margin > 0.0) {
                return invalid("pseudospectra needs points >= 2 and margin > 0".into());
            }
            if p.levels.is_empty() || p.levels.windows(2).any(|w| !(w[0] < w[1])) {
                return invalid("pseudospectra levels must be non-empty and strictly increasing".into());
            }
        } else if self.algorithm.is_baseline() {
            self.baseline_config()?;
        } else {
            self.trainer_config()?;
        }

        if let Some(c) = &self.convergence {
            if !(0.0..=1.0).contains(&c.accuracy) {
                return invalid(format!("convergence accuracy {} outside [0, 1]", c.accuracy));
            }
        }
        self.check_axes()
    }

    fn check_axes(&self) -> CliResult<()> {
        let mut base = self.clone();
        base.sweep.clear();
        let value = serde_json::to_value(&base).expect("spec serializes");
        for axis in &self.sweep {
            if axis.values.is_empty() {
                return Err(CliError::Validation(format!("sweep axis {} has no values", axis.param)));
            }
            if axis.param == "sweep" || axis.param.starts_with("sweep.") || lookup(&value, &axis.param).is_none() {
                return Err(CliError::Validation(format!("sweep axis {:?} is not a spec field", axis.param)));
            }
        }
        let mut seen = std::collections::HashSet::new();
        if let Some(dup) = self.sweep.iter().find(|a| !seen.insert(a.param.as_str())) {
            return Err(CliError::Validation(format!("sweep axis {} listed twice", dup.param)));
        }
        Ok(())
    }

    /// The single-run specs of the sweep, in row-major order of the axes
    /// (last axis fastest). Each run's seed is derived from the master seed
    /// and its axis values.
    pub fn expand(&self) -> CliResult<Vec<RunPlan>> {
        if self.sweep.is_empty() {
            return Err(CliError::Validation("sweep needs at least one axis".into()));
        }
        let mut base = self.clone();
        base.sweep.clear();
        let base_value = serde_json::to_value(&base).expect("spec serializes");

        let mut points: Vec<BTreeMap<String, Value>> = vec![BTreeMap::new()];
        for axis in &self.sweep {
            points = points
                .into_iter()
                .flat_map(|p| {
                    axis.values.iter().map(move |v| {
                        let mut q = p.clone();
                        q.insert(axis.param.clone(), v.clone());
                        q
                    })
                })
                .collect();
        }

        points
            .into_iter()
            .map(|axis_values| {
                let mut value = base_value.clone();
                for (param, v) in &axis_values {
                    let slot = lookup_mut(&mut value, param)
                        .ok_or_else(|| CliError::Validation(format!("sweep axis {param:?} is not a spec field")))?;
                    *slot = v.clone();
                }
                let mut spec: ExperimentSpec = serde_json::from_value(value).map_err(|e| {
                    CliError::Validation(format!("sweep point {}: {e}", canonical_json(&axis_map(&axis_values))))
                })?;
                spec.seed = derive_seed(self.seed, &axis_values);
                spec.validate().map_err(|e| match e {
                    CliError::Validation(m) => {
                        CliError::Validation(format!("sweep point {}: {m}", canonical_json(&axis_map(&axis_values))))
                    }
                    other => other,
                })?;
                Ok(RunPlan { spec, axis_values })
            })
            .collect()
    }

    /// SHA-256 over the canonical JSON of the run-defining fields. Key order
    /// in the source file and the output directory do not enter the hash.
    pub fn hash(&self) -> String {
        let mut s = self.clone();
        s.output_dir = None;
        let value = serde_json::to_value(&s).expect("spec serializes");
        hex(&Sha256::digest(canonical_json(&value).as_bytes()))
    }
}

fn axis_map(values: &BTreeMap<String, Value>) -> Value {
    Value::Object(values.iter().map(|(k, v)| (k.clone(), v.clone())).collect())
}

/// Per-run seed: the first eight bytes of SHA-256 over the master seed and
/// the canonical axis values, cut to 63 bits so it fits a TOML integer.
pub fn derive_seed(master: u64, axis_values: &BTreeMap<String, Value>) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(canonical_json(&axis_map(axis_values)).as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes")) >> 1
}

/// JSON with object keys sorted at every level.
pub fn canonical_json(value: &Value) -> String {
    fn sorted(v: &Value) -> Value {
        match v {
            Value::Object(map) => {
                let ordered: BTreeMap<&String, Value> = map.iter().map(|(k, v)| (k, sorted(v))).collect();
                Value::Object(ordered.into_iter().map(|(k, v)| (k.clone(), v)).collect())
            }
            Value::Array(items) => Value::Array(items.iter().map(sorted).collect()),
            other => other.clone(),
        }
    }
    serde_json::to_string(&sorted(value)).expect("json value serializes")
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn lookup<'a>(value: &'a Value, path: &str) -> Option<&'a Value> {
    path.split('.').try_fold(value, |v, key| v.as_object()?.get(key))
}

fn lookup_mut<'a>(value: &'a mut Value, path: &str) -> Option<&'a mut Value> {
    path.split('.').try_fold(value, |v, key| v.as_object_mut()?.get_mut(key))
}

#[cfg(test)]
mod tests {
    use super::*;

    const XOR: &str = r#"
schema = 1
name = "xor"
experiment = "xor"
algorithm = "rchl"
layout = [2, 2, 1]
seed = 5

[network]
w_dist = { kind = "uniform", low = 0.0, high = 1.0 }
g_dist = { kind = "uniform", low = -0.2, high = 0.2 }

[trainer]
eta = 0.1
gamma = 0.05
epochs = 10
samples_per_epoch = { draw = 4 }
eval_every = 5
accuracy = { kind = "threshold", epsilon = 0.01 }
"#;

    #[test]
    fn parses_and_fills_defaults() {
        let s = ExperimentSpec::from_toml(XOR).unwrap();
        assert_eq!(s.trainer.as_ref().unwrap().dt, 0.08);
        assert_eq!(s.trainer_config().unwrap().integrator.steps(), 375);
        assert_eq!(s.network.bias, BiasInit::Zero);
        assert!(s.feedback_mode().is_random());
    }

    #[test]
    fn hash_ignores_key_order_and_output_dir() {
        let a = ExperimentSpec::from_toml(XOR).unwrap();
        let reordered = XOR.replacen("name = \"xor\"\nexperiment = \"xor\"", "experiment = \"xor\"\nname = \"xor\"", 1);
        assert_ne!(reordered, XOR);
        let mut b = ExperimentSpec::from_toml(&reordered).unwrap();
        assert_eq!(a.hash(), b.hash());
        b.output_dir = Some("elsewhere".into());
        assert_eq!(a.hash(), b.hash());
        b.trainer.as_mut().unwrap().eta = 0.2;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn rejects_bad_specs() {
        let wide = XOR.replace("layout = [2, 2, 1]", "layout = [2, 2, 2]");
        assert!(matches!(ExperimentSpec::from_toml(&wide), Err(CliError::Validation(_))));
        let schema = XOR.replace("schema = 1", "schema = 7");
        assert!(matches!(ExperimentSpec::from_toml(&schema), Err(CliError::Validation(_))));
        let unknown = XOR.replace("seed = 5", "seed = 5\ncolour = 3");
        assert!(matches!(ExperimentSpec::from_toml(&unknown), Err(CliError::Validation(_))));
        let gamma = XOR.replace("gamma = 0.05", "gamma = 0.0");
        let err = ExperimentSpec::from_toml(&gamma).unwrap_err();
        assert_eq!(err.exit_code(), crate::error::EXIT_VALIDATION);
    }

    #[test]
    fn sweep_expansion() {
        let text = format!(
            "{XOR}\n[[sweep]]\nparam = \"trainer.gamma\"\nvalues = [0.01, 0.1]\n\n[[sweep]]\nparam = \"seed\"\nvalues = [1, 2, 3]\n"
        );
        let s = ExperimentSpec::from_toml(&text).unwrap();
        let plans = s.expand().unwrap();
        assert_eq!(plans.len(), 6);
        assert_eq!(plans[0].spec.trainer.as_ref().unwrap().gamma, 0.01);
        assert_eq!(plans[5].spec.trainer.as_ref().unwrap().gamma, 0.1);
        assert!(plans.iter().all(|p| p.spec.sweep.is_empty()));
        let seeds: std::collections::HashSet<u64> = plans.iter().map(|p| p.spec.seed).collect();
        assert_eq!(seeds.len(), 6);
        assert_eq!(s.expand().unwrap(), plans);
    }

    #[test]
    fn sweep_axis_must_name_a_field() {
        let text = format!("{XOR}\n[[sweep]]\nparam = \"trainer.gama\"\nvalues = [0.01]\n");
        assert!(matches!(ExperimentSpec::from_toml(&text), Err(CliError::Validation(_))));
        let empty = format!("{XOR}\n[[sweep]]\nparam = \"trainer.gamma\"\nvalues = []\n");
        assert!(matches!(ExperimentSpec::from_toml(&empty), Err(CliError::Validation(_))));
        let s = ExperimentSpec::from_toml(XOR).unwrap();
        assert!(matches!(s.expand(), Err(CliError::Validation(_))));
    }

    #[test]
    fn layout_axis_is_validated_per_point() {
        let text = format!("{XOR}\n[[sweep]]\nparam = \"layout\"\nvalues = [[2, 3, 1], [2, 3, 4]]\n");
        let s = ExperimentSpec::from_toml(&text).unwrap();
        assert!(matches!(s.expand(), Err(CliError::Validation(_))));
    }
}
