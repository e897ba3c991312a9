//! Backpropagation and feedback-alignment baselines on a sigmoid MLP with
//! quadratic loss `½‖y − t‖²`, trained by mini-batch SGD with momentum.
//!
//! Feedback alignment differs from backpropagation only in the backward pass:
//! the error reaching layer `k−1` is `B_k·δ_k` with a fixed random `B_k`
//! instead of `W_kᵀ·δ_k`.

use serde::{Deserialize, Serialize};

use crate::datasets::{Dataset, Samples};
use crate::error::{check_len, ChlError, Result};
use crate::linalg::{Mat, Vector};
use crate::metrics::{is_correct, squared_error, AccuracyMode, EvalSplit, MetricsRow};
use crate::network::{Activation, Layout};
use crate::rng::{sample_mat, sample_vec, DistSpec, Rng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Bp,
    Fda,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub algorithm: Algorithm,
    pub eta: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub batches: usize,
    pub w_dist: DistSpec,
    pub b_dist: DistSpec,
    /// Distribution of the fixed backward matrices (feedback alignment only).
    pub backward_dist: DistSpec,
    pub seed: u64,
    /// Evaluate every this many batches (and after the last one).
    pub eval_every: usize,
    pub accuracy: AccuracyMode,
}

impl BaselineConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(ChlError::InvalidConfig(m));
        if !(self.eta.is_finite() && self.eta >= 0.0) {
            return bad(format!("eta must be non-negative, got {}", self.eta));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum must lie in [0, 1), got {}", self.momentum));
        }
        if self.batch_size == 0 || self.batches == 0 || self.eval_every == 0 {
            return bad("batch_size, batches and eval_every must be at least 1".into());
        }
        self.w_dist.validate()?;
        self.b_dist.validate()?;
        self.backward_dist.validate()
    }
}

/// Sigmoid multilayer perceptron.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    layout: Layout,
    weights: Vec<Mat>,
    biases: Vec<Vector>,
    /// `backward[k-2]` is `B_k` (`sizes[k−1] × sizes[k]`) for `k = 2..=L`; empty for BP.
    backward: Vec<Mat>,
}

/// Per-layer loss gradients, indexed like the parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Mat>,
    pub biases: Vec<Vector>,
}

impl Gradients {
    fn zeros(layout: &Layout) -> Self {
        let d = layout.depth();
        Gradients {
            weights: (1..=d).map(|k| Mat::zeros(layout.width(k), layout.width(k - 1))).collect(),
            biases: (1..=d).map(|k| Vector::zeros(layout.width(k))).collect(),
        }
    }
}

impl Mlp {
    /// Weights, backward matrices and biases come from streams 1, 2 and 3 of `rng`.
    pub fn init(layout: &Layout, cfg: &BaselineConfig, rng: &mut Rng) -> Result<Self> {
        let mut w_rng = rng.fork(1);
        let mut bw_rng = rng.fork(2);
        let mut b_rng = rng.fork(3);
        let d = layout.depth();
        let weights = (1..=d)
            .map(|k| sample_mat(&mut w_rng, layout.width(k), layout.width(k - 1), &cfg.w_dist))
            .collect::<Result<Vec<_>>>()?;
        let biases = (1..=d)
            .map(|k| sample_vec(&mut b_rng, layout.width(k), &cfg.b_dist))
            .collect::<Result<Vec<_>>>()?;
        let backward = match cfg.algorithm {
            Algorithm::Bp => Vec::new(),
            Algorithm::Fda => (2..=d)
                .map(|k| sample_mat(&mut bw_rng, layout.width(k - 1), layout.width(k), &cfg.backward_dist))
                .collect::<Result<Vec<_>>>()?,
        };
        Ok(Mlp {
            layout: layout.clone(),
            weights,
            biases,
            backward,
        })
    }

    /// Reassembles a perceptron from stored parts, validating every shape.
    /// `backward` is empty for BP.
    pub fn from_parts(
        layout: Layout,
        weights: Vec<Mat>,
        biases: Vec<Vector>,
        backward: Vec<Mat>,
    ) -> Result<Self> {
        let d = layout.depth();
        check_len("weight count", d, weights.len())?;
        check_len("bias count", d, biases.len())?;
        if !backward.is_empty() {
            check_len("backward count", d - 1, backward.len())?;
        }
        for k in 1..=d {
            check_len("weight rows", layout.width(k), weights[k - 1].rows())?;
            check_len("weight cols", layout.width(k - 1), weights[k - 1].cols())?;
            check_len("bias length", layout.width(k), biases[k - 1].len())?;
        }
        for (i, b) in backward.iter().enumerate() {
            let k = i + 2;
            check_len("backward rows", layout.width(k - 1), b.rows())?;
            check_len("backward cols", layout.width(k), b.cols())?;
        }
        Ok(Mlp {
            layout,
            weights,
            biases,
            backward,
        })
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn weights(&self) -> &[Mat] {
        &self.weights
    }

    pub fn biases(&self) -> &[Vector] {
        &self.biases
    }

    pub fn weight(&self, k: usize) -> &Mat {
        &self.weights[k - 1]
    }

    pub fn weight_mut(&mut self, k: usize) -> &mut Mat {
        &mut self.weights[k - 1]
    }

    pub fn bias(&self, k: usize) -> &Vector {
        &self.biases[k - 1]
    }

    pub fn bias_mut(&mut self, k: usize) -> &mut Vector {
        &mut self.biases[k - 1]
    }

    pub fn backward(&self) -> &[Mat] {
        &self.backward
    }

    /// Sets every `B_k` to `W_kᵀ`; with this done after each step feedback
    /// alignment follows backpropagation.
    pub fn sync_backward_to_transpose(&mut self) {
        for k in 2..=self.layout.depth() {
            self.backward[k - 2] = self.weights[k - 1].transpose();
        }
    }

    pub fn backward_checksum(&self) -> u64 {
        self.backward
            .iter()
            .fold(0u64, |acc, b| acc.rotate_left(7) ^ b.checksum())
    }

    /// Activities `a_0..=a_L` of a forward pass.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<Vector>> {
        check_len("input", self.layout.input_width(), x.len())?;
        let mut acts = vec![Vector::from_slice(x)];
        for k in 1..=self.layout.depth() {
            let mut z = self.weights[k - 1].matvec(&acts[k - 1])?;
            for (zi, bi) in z.iter_mut().zip(self.biases[k - 1].iter()) {
                *zi = Activation::Sigmoid.apply(*zi + bi);
            }
            acts.push(z);
        }
        Ok(acts)
    }

    pub fn output(&self, x: &[f64]) -> Result<Vector> {
        Ok(self.forward(x)?.pop().expect("depth ≥ 1"))
    }

    /// `½‖y − t‖²` for one sample.
    pub fn loss(&self, x: &[f64], t: &[f64]) -> Result<f64> {
        let y = self.output(x)?;
        check_len("target", y.len(), t.len())?;
        Ok(0.5 * squared_error(&y, t))
    }

    /// Gradient of the loss for one sample. Feedback alignment networks route
    /// the error through `B_k`; the result is then not the true gradient.
    pub fn gradients(&self, x: &[f64], t: &[f64]) -> Result<Gradients> {
        let mut g = Gradients::zeros(&self.layout);
        self.accumulate_gradients(x, t, &mut g)?;
        Ok(g)
    }

    fn accumulate_gradients(&self, x: &[f64], t: &[f64], g: &mut Gradients) -> Result<()> {
        let acts = self.forward(x)?;
        let d = self.layout.depth();
        check_len("target", self.layout.output_width(), t.len())?;
        let act = Activation::Sigmoid;
        let mut delta: Vec<f64> = acts[d]
            .iter()
            .zip(t)
            .map(|(&y, &ti)| (y - ti) * act.derivative_from_output(y))
            .collect();
        for k in (1..=d).rev() {
            g.weights[k - 1].add_outer(1.0, &delta, &acts[k - 1]);
            for (gb, dl) in g.biases[k - 1].iter_mut().zip(&delta) {
                *gb += dl;
            }
            if k > 1 {
                let mut back = vec![0.0; self.layout.width(k - 1)];
                if self.backward.is_empty() {
                    self.weights[k - 1].matvec_t_into(&delta, &mut back);
                } else {
                    self.backward[k - 2].matvec_into(&delta, &mut back);
                }
                for (b, &a) in back.iter_mut().zip(acts[k - 1].iter()) {
                    *b *= act.derivative_from_output(a);
                }
                delta = back;
            }
        }
        Ok(())
    }
}

/// SGD with momentum: `v ← α·v + g`, `θ ← θ − η·v`.
#[derive(Clone, Debug)]
pub struct BaselineTrainer {
    pub mlp: Mlp,
    cfg: BaselineConfig,
    velocity: Gradients,
    rng: Rng,
}

impl BaselineTrainer {
    pub fn new(layout: &Layout, cfg: &BaselineConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = Rng::new(cfg.seed);
        let mlp = Mlp::init(layout, cfg, &mut rng)?;
        Ok(Self::with_mlp(mlp, cfg))
    }

    pub fn with_mlp(mlp: Mlp, cfg: &BaselineConfig) -> Self {
        BaselineTrainer {
            velocity: Gradients::zeros(mlp.layout()),
            mlp,
            cfg: cfg.clone(),
            rng: Rng::with_stream(cfg.seed, crate::learning::TRAIN_STREAM),
        }
    }

    /// One mini-batch drawn with replacement from `train`.
    pub fn step(&mut self, train: &Samples) -> Result<()> {
        let mut g = Gradients::zeros(self.mlp.layout());
        for _ in 0..self.cfg.batch_size {
            let i = self.rng.index(train.len());
            self.mlp.accumulate_gradients(train.input(i), train.target(i), &mut g)?;
        }
        let inv = 1.0 / self.cfg.batch_size as f64;
        let (eta, alpha) = (self.cfg.eta, self.cfg.momentum);
        for k in 1..=self.mlp.layout().depth() {
            let v = &mut self.velocity.weights[k - 1];
            let w = &mut self.mlp.weights[k - 1];
            for ((vi, wi), gi) in v
                .as_mut_slice()
                .iter_mut()
                .zip(w.as_mut_slice())
                .zip(g.weights[k - 1].as_slice())
            {
                *vi = alpha * *vi + gi * inv;
                *wi -= eta * *vi;
            }
            let v = &mut self.velocity.biases[k - 1];
            let b = &mut self.mlp.biases[k - 1];
            for ((vi, bi), gi) in v.iter_mut().zip(b.iter_mut()).zip(g.biases[k - 1].iter()) {
                *vi = alpha * *vi + gi * inv;
                *bi -= eta * *vi;
            }
            if !w.is_finite() || !b.is_finite() {
                return Err(ChlError::NonFiniteUpdate { layer: k });
            }
        }
        Ok(())
    }
}

/// MSE and accuracy of the forward pass over `samples`.
pub fn evaluate_mlp(mlp: &Mlp, samples: &Samples, mode: AccuracyMode) -> Result<(f64, f64)> {
    check_len("target width", mlp.layout().output_width(), samples.target_width())?;
    let mut sq = 0.0;
    let mut hits = 0usize;
    for (x, t) in samples.iter() {
        let y = mlp.output(x)?;
        sq += squared_error(&y, t);
        hits += usize::from(is_correct(&y, t, mode));
    }
    let n = samples.len();
    Ok((sq / (n * samples.target_width()) as f64, hits as f64 / n as f64))
}

#[derive(Clone, Debug)]
pub struct BaselineRun {
    pub mlp: Mlp,
    pub rows: Vec<MetricsRow>,
}

/// Trains with the algorithm named in `cfg`. Rows use the batch count as the epoch.
pub fn baseline_train(layout: &Layout, data: &Dataset, cfg: &BaselineConfig) -> Result<BaselineRun> {
    check_len("input width", layout.input_width(), data.input_width())?;
    check_len("target width", layout.output_width(), data.target_width())?;
    let mut trainer = BaselineTrainer::new(layout, cfg)?;
    let mut rows = Vec::new();
    for batch in 1..=cfg.batches {
        trainer.step(&data.train)?;
        if batch % cfg.eval_every == 0 || batch == cfg.batches {
            let (mse, accuracy) = evaluate_mlp(&trainer.mlp, &data.test, cfg.accuracy)?;
            rows.push(MetricsRow {
                epoch: batch,
                phase: EvalSplit::Test,
                mse,
                accuracy,
            });
        }
    }
    Ok(BaselineRun {
        mlp: trainer.mlp,
        rows,
    })
}

pub fn bp_train(layout: &Layout, data: &Dataset, cfg: &BaselineConfig) -> Result<BaselineRun> {
    baseline_train(layout, data, &BaselineConfig { algorithm: Algorithm::Bp, ..cfg.clone() })
}

pub fn fda_train(layout: &Layout, data: &Dataset, cfg: &BaselineConfig) -> Result<BaselineRun> {
    baseline_train(layout, data, &BaselineConfig { algorithm: Algorithm::Fda, ..cfg.clone() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::make_xor;

    fn cfg(algorithm: Algorithm) -> BaselineConfig {
        BaselineConfig {
            algorithm,
            eta: 0.1,
            momentum: 0.1,
            batch_size: 1,
            batches: 200,
            w_dist: DistSpec::symmetric_uniform(0.3).unwrap(),
            b_dist: DistSpec::symmetric_uniform(0.1).unwrap(),
            backward_dist: DistSpec::symmetric_uniform(0.3).unwrap(),
            seed: 9,
            eval_every: 50,
            accuracy: AccuracyMode::Threshold { epsilon: 0.5 },
        }
    }

    fn layout() -> Layout {
        Layout::new(vec![2, 2, 1]).unwrap()
    }

    #[test]
    fn zero_rate_keeps_weights() {
        let mut c = cfg(Algorithm::Bp);
        c.eta = 0.0;
        let before = Mlp::init(&layout(), &c, &mut Rng::new(c.seed)).unwrap();
        let run = bp_train(&layout(), &make_xor(), &c).unwrap();
        assert_eq!(run.mlp, before);
        assert_eq!(run.rows.len(), 4);
    }

    #[test]
    fn backward_matrices_frozen() {
        let c = cfg(Algorithm::Fda);
        let before = Mlp::init(&layout(), &c, &mut Rng::new(c.seed)).unwrap();
        let run = fda_train(&layout(), &make_xor(), &c).unwrap();
        assert_eq!(run.mlp.backward_checksum(), before.backward_checksum());
        assert_ne!(run.mlp.weight(1), before.weight(1));
    }

    #[test]
    fn forward_passes_agree() {
        let bp = Mlp::init(&layout(), &cfg(Algorithm::Bp), &mut Rng::new(1)).unwrap();
        let fda = Mlp::init(&layout(), &cfg(Algorithm::Fda), &mut Rng::new(1)).unwrap();
        assert_eq!(bp.output(&[1.0, 0.0]).unwrap(), fda.output(&[1.0, 0.0]).unwrap());
        assert_eq!(fda.backward().len(), 1);
        assert_eq!(fda.backward()[0].shape(), (2, 1));
    }

    #[test]
    fn output_gradient_by_hand() {
        // 1-1 net: y = σ(w·x + b); dL/dw = (y − t)·y·(1 − y)·x.
        let c = cfg(Algorithm::Bp);
        let mut m = Mlp::init(&Layout::new(vec![1, 1]).unwrap(), &c, &mut Rng::new(2)).unwrap();
        m.weight_mut(1).set(0, 0, 0.7);
        m.bias_mut(1)[0] = -0.2;
        let y = 1.0 / (1.0 + (-(0.7 * 2.0 - 0.2f64)).exp());
        let g = m.gradients(&[2.0], &[1.0]).unwrap();
        let want = (y - 1.0) * y * (1.0 - y) * 2.0;
        assert!((g.weights[0].get(0, 0) - want).abs() < 1e-15);
    }

    #[test]
    fn invalid_momentum_rejected() {
        let mut c = cfg(Algorithm::Bp);
        c.momentum = 1.0;
        assert!(BaselineTrainer::new(&layout(), &c).is_err());
    }
}
