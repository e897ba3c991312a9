//! Layered networks with forward weights, top-down feedback and biases.
//!
//! Layers are indexed `0..=L`: layer 0 is the input and layer `L` the output.
//! `W_k` maps layer `k−1` to layer `k` and has shape `sizes[k] × sizes[k−1]`.
//! The feedback into layer `k` from layer `k+1` (for `k = 1..L−1`) has shape
//! `sizes[k] × sizes[k+1]`; it is either a view of `W_{k+1}ᵀ` or a random matrix
//! drawn once and never modified.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, ChlError, Result};
use crate::linalg::{Mat, Vector};
use crate::rng::{sample_mat, sample_vec, DistSpec, Rng};

/// Elementwise nonlinearity.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Sigmoid,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Sigmoid => sigmoid(x),
        }
    }

    /// Derivative expressed through the activation value `y = f(x)`.
    #[inline]
    pub fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Sigmoid => y * (1.0 - y),
        }
    }

    pub fn lipschitz(self) -> f64 {
        match self {
            Activation::Sigmoid => 0.25,
        }
    }
}

/// Logistic function, branch form so `exp` never overflows.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn activate(a: Activation, v: &[f64]) -> Vector {
    v.iter().map(|&x| a.apply(x)).collect::<Vec<_>>().into()
}

/// Layer widths, input first.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Layout {
    sizes: Vec<usize>,
}

impl Layout {
    pub fn new(sizes: Vec<usize>) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(ChlError::InvalidLayout(format!(
                "need at least an input and an output layer, got {} layer(s)",
                sizes.len()
            )));
        }
        if sizes.contains(&0) {
            return Err(ChlError::InvalidLayout(format!("zero-width layer in {sizes:?}")));
        }
        Ok(Layout { sizes })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    /// Index `L` of the output layer.
    pub fn depth(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn width(&self, k: usize) -> usize {
        self.sizes[k]
    }

    pub fn input_width(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_width(&self) -> usize {
        self.sizes[self.depth()]
    }
}

impl TryFrom<Vec<usize>> for Layout {
    type Error = ChlError;

    fn try_from(sizes: Vec<usize>) -> Result<Self> {
        Layout::new(sizes)
    }
}

impl From<Layout> for Vec<usize> {
    fn from(layout: Layout) -> Self {
        layout.sizes
    }
}

impl std::fmt::Display for Layout {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.sizes.iter().map(usize::to_string).collect();
        f.write_str(&parts.join("-"))
    }
}

/// How top-down signals reach hidden layers.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FeedbackMode {
    /// Symmetric feedback through `W_{k+1}ᵀ` (CHL).
    Transpose,
    /// Fixed random matrices drawn from `dist` (random-feedback CHL).
    Random { dist: DistSpec },
}

impl FeedbackMode {
    pub fn is_random(&self) -> bool {
        matches!(self, FeedbackMode::Random { .. })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BiasInit {
    #[default]
    Zero,
    Random { dist: DistSpec },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    layout: Layout,
    mode: FeedbackMode,
    /// `weights[k-1]` is `W_k`.
    weights: Vec<Mat>,
    /// `feedback[k-1]` is the random feedback into layer `k`; empty in transpose mode.
    feedback: Vec<Mat>,
    /// `biases[k-1]` is `b_k`.
    biases: Vec<Vector>,
    bias_adaptive: bool,
    activation: Activation,
}

/// Draws a fresh network.
///
/// Weights, feedback matrices and biases come from three forked streams of
/// `rng`, so a transpose-mode and a random-mode network built from the same
/// seed share identical initial weights.
pub fn init_network(
    layout: &Layout,
    mode: &FeedbackMode,
    w_dist: &DistSpec,
    b_init: &BiasInit,
    rng: &mut Rng,
) -> Result<Network> {
    let mut w_rng = rng.fork(1);
    let mut g_rng = rng.fork(2);
    let mut b_rng = rng.fork(3);
    let depth = layout.depth();

    let weights = (1..=depth)
        .map(|k| sample_mat(&mut w_rng, layout.width(k), layout.width(k - 1), w_dist))
        .collect::<Result<Vec<_>>>()?;

    let feedback = match mode {
        FeedbackMode::Transpose => Vec::new(),
        FeedbackMode::Random { dist } => (1..depth)
            .map(|k| sample_mat(&mut g_rng, layout.width(k), layout.width(k + 1), dist))
            .collect::<Result<Vec<_>>>()?,
    };

    let biases = (1..=depth)
        .map(|k| match b_init {
            BiasInit::Zero => Ok(Vector::zeros(layout.width(k))),
            BiasInit::Random { dist } => sample_vec(&mut b_rng, layout.width(k), dist),
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(Network {
        layout: layout.clone(),
        mode: *mode,
        weights,
        feedback,
        biases,
        bias_adaptive: false,
        activation: Activation::Sigmoid,
    })
}

impl Network {
    /// Reassembles a network from stored parts, validating every shape.
    pub fn from_parts(
        layout: Layout,
        mode: FeedbackMode,
        weights: Vec<Mat>,
        feedback: Vec<Mat>,
        biases: Vec<Vector>,
        bias_adaptive: bool,
        activation: Activation,
    ) -> Result<Self> {
        let depth = layout.depth();
        check_len("weight count", depth, weights.len())?;
        check_len("bias count", depth, biases.len())?;
        let expected_feedback = if mode.is_random() { depth - 1 } else { 0 };
        check_len("feedback count", expected_feedback, feedback.len())?;
        for k in 1..=depth {
            let w = &weights[k - 1];
            check_len("weight rows", layout.width(k), w.rows())?;
            check_len("weight cols", layout.width(k - 1), w.cols())?;
            check_len("bias length", layout.width(k), biases[k - 1].len())?;
        }
        for (i, g) in feedback.iter().enumerate() {
            let k = i + 1;
            check_len("feedback rows", layout.width(k), g.rows())?;
            check_len("feedback cols", layout.width(k + 1), g.cols())?;
        }
        Ok(Network {
            layout,
            mode,
            weights,
            feedback,
            biases,
            bias_adaptive,
            activation,
        })
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn depth(&self) -> usize {
        self.layout.depth()
    }

    pub fn mode(&self) -> &FeedbackMode {
        &self.mode
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn bias_adaptive(&self) -> bool {
        self.bias_adaptive
    }

    pub fn set_bias_adaptive(&mut self, adaptive: bool) {
        self.bias_adaptive = adaptive;
    }

    /// `W_k`, `1 ≤ k ≤ L`.
    pub fn weight(&self, k: usize) -> &Mat {
        &self.weights[k - 1]
    }

    pub fn weight_mut(&mut self, k: usize) -> &mut Mat {
        &mut self.weights[k - 1]
    }

    pub fn weights(&self) -> &[Mat] {
        &self.weights
    }

    /// `b_k`, `1 ≤ k ≤ L`.
    pub fn bias(&self, k: usize) -> &Vector {
        &self.biases[k - 1]
    }

    pub fn bias_mut(&mut self, k: usize) -> &mut Vector {
        &mut self.biases[k - 1]
    }

    pub fn biases(&self) -> &[Vector] {
        &self.biases
    }

    /// The stored random feedback matrices (empty in transpose mode).
    pub fn random_feedback(&self) -> &[Mat] {
        &self.feedback
    }

    /// Feedback matrix into layer `k`, materialized.
    pub fn feedback(&self, k: usize) -> Result<Mat> {
        self.check_feedback_index(k)?;
        Ok(match self.mode {
            FeedbackMode::Transpose => self.weights[k].transpose(),
            FeedbackMode::Random { .. } => self.feedback[k - 1].clone(),
        })
    }

    /// `out = V · x_{k+1}` where `V` is the feedback into layer `k`.
    #[inline]
    pub fn feedback_matvec_into(&self, k: usize, upper: &[f64], out: &mut [f64]) {
        match self.mode {
            FeedbackMode::Transpose => self.weights[k].matvec_t_into(upper, out),
            FeedbackMode::Random { .. } => self.feedback[k - 1].matvec_into(upper, out),
        }
    }

    /// Overwrites the random feedback into layer `k`. Training never calls this;
    /// it exists for diagnostics such as forcing `G = Wᵀ`.
    pub fn set_random_feedback(&mut self, k: usize, g: Mat) -> Result<()> {
        self.check_feedback_index(k)?;
        if !self.mode.is_random() {
            return Err(ChlError::InvalidConfig(
                "transpose-mode networks store no feedback matrices".into(),
            ));
        }
        check_len("feedback rows", self.layout.width(k), g.rows())?;
        check_len("feedback cols", self.layout.width(k + 1), g.cols())?;
        self.feedback[k - 1] = g;
        Ok(())
    }

    /// Sets every random feedback matrix to the transpose of the weights above it.
    pub fn sync_feedback_to_transpose(&mut self) -> Result<()> {
        for k in 1..self.depth() {
            let t = self.weights[k].transpose();
            self.set_random_feedback(k, t)?;
        }
        Ok(())
    }

    /// Checksum over all feedback matrices; constant for a frozen random network.
    pub fn feedback_checksum(&self) -> u64 {
        self.feedback
            .iter()
            .fold(0u64, |acc, g| acc.rotate_left(7) ^ g.checksum())
    }

    fn check_feedback_index(&self, k: usize) -> Result<()> {
        let max = self.depth().saturating_sub(1);
        if k == 0 || k > max {
            return Err(ChlError::LayerOutOfRange { index: k, max });
        }
        Ok(())
    }
}

/// `γ^n` as an explicit product, so the value does not depend on the
/// platform's `powi`.
pub fn gamma_power(gamma: f64, n: usize) -> f64 {
    (0..n).fold(1.0, |p, _| p * gamma)
}

/// Per-layer learning-rate multiplier `γ^(k−L)` for `k = 1..=L`.
pub fn update_scales(gamma: f64, depth: usize) -> Vec<f64> {
    (1..=depth).map(|k| 1.0 / gamma_power(gamma, depth - k)).collect()
}
