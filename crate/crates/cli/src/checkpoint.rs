//! Lossless JSON checkpoints of trained models.
//!
//! Floats are written in shortest round-trip form, so load followed by save
//! reproduces the file byte for byte.

use std::path::Path;

use chl_core::baselines::Mlp;
use chl_core::metrics::AccuracyMode;
use chl_core::{Activation, FeedbackMode, IntegratorConfig, Layout, Mat, Network, Vector};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{CliError, CliResult};
use crate::spec::Experiment;

pub const FORMAT: &str = "chl-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatData {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl From<&Mat> for MatData {
    fn from(m: &Mat) -> Self {
        MatData {
            rows: m.rows(),
            cols: m.cols(),
            data: m.as_slice().to_vec(),
        }
    }
}

impl MatData {
    fn to_mat(&self) -> CliResult<Mat> {
        Ok(Mat::from_vec(self.rows, self.cols, self.data.clone())?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Model {
    /// A CHL or rCHL network with the settle parameters needed to evaluate it.
    Chl {
        layout: Vec<usize>,
        mode: FeedbackMode,
        activation: Activation,
        bias_adaptive: bool,
        gamma: f64,
        integrator: IntegratorConfig,
        weights: Vec<MatData>,
        feedback: Vec<MatData>,
        biases: Vec<Vec<f64>>,
    },
    /// A BP or FDA perceptron.
    Mlp {
        layout: Vec<usize>,
        weights: Vec<MatData>,
        biases: Vec<Vec<f64>>,
        backward: Vec<MatData>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub spec_hash: String,
    pub seed: u64,
    pub experiment: Experiment,
    pub accuracy: AccuracyMode,
    pub model: Model,
}

impl Checkpoint {
    pub fn from_network(
        net: &Network,
        gamma: f64,
        integrator: IntegratorConfig,
        experiment: Experiment,
        accuracy: AccuracyMode,
        spec_hash: &str,
        seed: u64,
    ) -> Self {
        let model = Model::Chl {
            layout: net.layout().sizes().to_vec(),
            mode: *net.mode(),
            activation: net.activation(),
            bias_adaptive: net.bias_adaptive(),
            gamma,
            integrator,
            weights: net.weights().iter().map(MatData::from).collect(),
            feedback: net.random_feedback().iter().map(MatData::from).collect(),
            biases: net.biases().iter().map(|b| b.as_slice().to_vec()).collect(),
        };
        Self::wrap(model, experiment, accuracy, spec_hash, seed)
    }

    pub fn from_mlp(mlp: &Mlp, experiment: Experiment, accuracy: AccuracyMode, spec_hash: &str, seed: u64) -> Self {
        let model = Model::Mlp {
            layout: mlp.layout().sizes().to_vec(),
            weights: mlp.weights().iter().map(MatData::from).collect(),
            biases: mlp.biases().iter().map(|b| b.as_slice().to_vec()).collect(),
            backward: mlp.backward().iter().map(MatData::from).collect(),
        };
        Self::wrap(model, experiment, accuracy, spec_hash, seed)
    }

    fn wrap(model: Model, experiment: Experiment, accuracy: AccuracyMode, spec_hash: &str, seed: u64) -> Self {
        Checkpoint {
            format: FORMAT.into(),
            version: VERSION,
            spec_hash: spec_hash.into(),
            seed,
            experiment,
            accuracy,
            model,
        }
    }

    pub fn to_bytes(&self) -> CliResult<Vec<u8>> {
        let finite = |m: &[MatData], b: &[Vec<f64>]| {
            m.iter().all(|m| m.data.iter().all(|v| v.is_finite())) && b.iter().flatten().all(|v| v.is_finite())
        };
        let ok = match &self.model {
            Model::Chl {
                weights,
                feedback,
                biases,
                ..
            } => finite(weights, biases) && finite(feedback, &[]),
            Model::Mlp {
                weights,
                biases,
                backward,
                ..
            } => finite(weights, biases) && finite(backward, &[]),
        };
        if !ok {
            return Err(CliError::Diverged("refusing to checkpoint non-finite parameters".into()));
        }
        let mut bytes = serde_json::to_vec(self).expect("checkpoint serializes");
        bytes.push(b'\n');
        Ok(bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> CliResult<Self> {
        let bad = |m: String| CliError::Validation(format!("checkpoint: {m}"));
        let value: Value = serde_json::from_slice(bytes).map_err(|e| bad(e.to_string()))?;
        match value.get("format").and_then(Value::as_str) {
            Some(FORMAT) => {}
            other => return Err(bad(format!("format tag {other:?}, expected {FORMAT:?}"))),
        }
        match value.get("version").and_then(Value::as_u64) {
            Some(v) if v == u64::from(VERSION) => {}
            other => return Err(bad(format!("version {other:?}, expected {VERSION}"))),
        }
        let ckpt: Checkpoint = serde_json::from_value(value).map_err(|e| bad(e.to_string()))?;
        ckpt.check_shapes()?;
        Ok(ckpt)
    }

    pub fn save(&self, path: &Path) -> CliResult<()> {
        std::fs::write(path, self.to_bytes()?).map_err(|e| CliError::io(path, e))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    fn check_shapes(&self) -> CliResult<()> {
        match &self.model {
            Model::Chl { .. } => self.network().map(|_| ()),
            Model::Mlp { .. } => self.mlp().map(|_| ()),
        }
        .map_err(|e| CliError::Validation(format!("checkpoint: {e}")))
    }

    pub fn network(&self) -> CliResult<Network> {
        match &self.model {
            Model::Chl {
                layout,
                mode,
                activation,
                bias_adaptive,
                weights,
                feedback,
                biases,
                ..
            } => Ok(Network::from_parts(
                Layout::new(layout.clone())?,
                *mode,
                weights.iter().map(MatData::to_mat).collect::<CliResult<_>>()?,
                feedback.iter().map(MatData::to_mat).collect::<CliResult<_>>()?,
                biases.iter().map(|b| Vector::from_slice(b)).collect(),
                *bias_adaptive,
                *activation,
            )?),
            Model::Mlp { .. } => Err(CliError::Validation("checkpoint holds a perceptron, not a CHL network".into())),
        }
    }

    pub fn mlp(&self) -> CliResult<Mlp> {
        match &self.model {
            Model::Mlp {
                layout,
                weights,
                biases,
                backward,
            } => Ok(Mlp::from_parts(
                Layout::new(layout.clone())?,
                weights.iter().map(MatData::to_mat).collect::<CliResult<_>>()?,
                biases.iter().map(|b| Vector::from_slice(b)).collect(),
                backward.iter().map(MatData::to_mat).collect::<CliResult<_>>()?,
            )?),
            Model::Chl { .. } => Err(CliError::Validation("checkpoint holds a CHL network, not a perceptron".into())),
        }
    }

    pub fn layout(&self) -> &[usize] {
        match &self.model {
            Model::Chl { layout, .. } | Model::Mlp { layout, .. } => layout,
        }
    }
}
