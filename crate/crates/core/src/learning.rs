//! The contrastive Hebbian update and the online training loop.
//!
//! ```text
//! ΔW_k = η·γ^(k−L)·(x̂_k x̂_{k−1}ᵀ − x̌_k x̌_{k−1}ᵀ)
//! ```
//!
//! `x̂` are the clamped-phase activities, `x̌` the free-phase ones. The feedback
//! matrices are never touched.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::datasets::{Dataset, Samples};
use crate::dynamics::{IntegratorConfig, PhasePair, Settler};
use crate::error::{check_len, ChlError, Result};
use crate::metrics::{is_correct, squared_error, AccuracyMode, EvalSplit, MetricsRow};
use crate::network::{gamma_power, Network};
use crate::rng::Rng;

/// RNG stream for sample selection, distinct from the initialization streams.
pub const TRAIN_STREAM: u64 = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplesPerEpoch {
    /// Draw this many sample indices uniformly with replacement.
    Draw(usize),
    /// One pass over a fresh shuffle of the training set.
    FullPass,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainerConfig {
    pub eta: f64,
    pub gamma: f64,
    pub epochs: usize,
    pub samples_per_epoch: SamplesPerEpoch,
    pub eval_every: usize,
    pub integrator: IntegratorConfig,
    pub seed: u64,
    pub accuracy: AccuracyMode,
    /// Also report metrics on the training split.
    pub eval_train: bool,
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(ChlError::InvalidConfig(m));
        if !(self.eta.is_finite() && self.eta >= 0.0) {
            return bad(format!("eta must be non-negative, got {}", self.eta));
        }
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return bad(format!("gamma must be positive, got {}", self.gamma));
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if self.eval_every == 0 {
            return bad("eval_every must be at least 1".into());
        }
        if self.samples_per_epoch == SamplesPerEpoch::Draw(0) {
            return bad("samples_per_epoch must be at least 1".into());
        }
        self.integrator.validate()
    }
}

/// Training stopped early; `rows` holds the metrics recorded before `epoch`.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainError {
    pub epoch: usize,
    pub source: ChlError,
    pub rows: Vec<MetricsRow>,
}

impl fmt::Display for TrainError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "training failed in epoch {}: {}", self.epoch, self.source)
    }
}

impl std::error::Error for TrainError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.source)
    }
}

/// Applies the update for one settled sample.
pub fn chl_update(net: &mut Network, pair: &PhasePair, eta: f64, gamma: f64) -> Result<()> {
    apply_chl_update(net, pair.clamped.layers(), pair.free.layers(), eta, gamma)
}

/// [`chl_update`] on raw per-layer activity slices, `0..=L` in each.
pub fn apply_chl_update<V: AsRef<[f64]>>(
    net: &mut Network,
    clamped: &[V],
    free: &[V],
    eta: f64,
    gamma: f64,
) -> Result<()> {
    let depth = net.depth();
    check_len("clamped layer count", depth + 1, clamped.len())?;
    check_len("free layer count", depth + 1, free.len())?;
    for k in 0..=depth {
        let w = net.layout().width(k);
        check_len("clamped layer width", w, clamped[k].as_ref().len())?;
        check_len("free layer width", w, free[k].as_ref().len())?;
    }
    let adaptive = net.bias_adaptive();
    for k in 1..=depth {
        let scale = eta / gamma_power(gamma, depth - k);
        if !scale.is_finite() {
            return Err(ChlError::NonFiniteUpdate { layer: k });
        }
        if scale == 0.0 {
            continue;
        }
        let (xh, xh_prev) = (clamped[k].as_ref(), clamped[k - 1].as_ref());
        let (xf, xf_prev) = (free[k].as_ref(), free[k - 1].as_ref());
        let wk = net.weight_mut(k);
        for i in 0..xh.len() {
            let (a, c) = (xh[i], xf[i]);
            for (wij, (&b, &d)) in wk.row_mut(i).iter_mut().zip(xh_prev.iter().zip(xf_prev)) {
                *wij += scale * (a * b - c * d);
            }
        }
        if !wk.is_finite() {
            return Err(ChlError::NonFiniteUpdate { layer: k });
        }
        if adaptive {
            for (bi, (&a, &c)) in net.bias_mut(k).iter_mut().zip(xh.iter().zip(xf)) {
                *bi += scale * (a - c);
            }
        }
    }
    Ok(())
}

/// Settles one sample in both phases and applies the update.
pub fn train_step(
    net: &mut Network,
    settler: &mut Settler,
    input: &[f64],
    target: &[f64],
    cfg: &TrainerConfig,
) -> Result<()> {
    settler.run_phases(net, input, target, &cfg.integrator, cfg.gamma)?;
    apply_chl_update(net, settler.clamped_layers(), settler.free_layers(), cfg.eta, cfg.gamma)
}

/// Free-phase MSE and accuracy over `samples`, learning frozen.
pub fn evaluate(
    net: &Network,
    samples: &Samples,
    integrator: &IntegratorConfig,
    gamma: f64,
    mode: AccuracyMode,
) -> Result<(f64, f64)> {
    check_len("input width", net.layout().input_width(), samples.input_width())?;
    check_len("target width", net.layout().output_width(), samples.target_width())?;
    if samples.is_empty() {
        return Err(ChlError::InvalidConfig("evaluation set is empty".into()));
    }
    let mut settler = Settler::new(net.layout());
    let mut sq = 0.0;
    let mut hits = 0usize;
    for (x, t) in samples.iter() {
        let y = settler.free_response(net, x, integrator, gamma)?;
        sq += squared_error(y, t);
        hits += usize::from(is_correct(y, t, mode));
    }
    let n = samples.len();
    Ok((sq / (n * samples.target_width()) as f64, hits as f64 / n as f64))
}

/// Network outputs for every sample after a free settle.
pub fn predict(
    net: &Network,
    samples: &Samples,
    integrator: &IntegratorConfig,
    gamma: f64,
) -> Result<Vec<Vec<f64>>> {
    let mut settler = Settler::new(net.layout());
    samples
        .iter()
        .map(|(x, _)| settler.free_response(net, x, integrator, gamma).map(<[f64]>::to_vec))
        .collect()
}

pub fn train(
    net: &mut Network,
    data: &Dataset,
    cfg: &TrainerConfig,
) -> std::result::Result<Vec<MetricsRow>, TrainError> {
    train_observed(net, data, cfg, |_| {})
}

/// [`train`], calling `observe` as each metrics row is produced.
///
/// Rows are recorded every `eval_every` epochs and after the final epoch.
pub fn train_observed(
    net: &mut Network,
    data: &Dataset,
    cfg: &TrainerConfig,
    mut observe: impl FnMut(&MetricsRow),
) -> std::result::Result<Vec<MetricsRow>, TrainError> {
    let mut rows = Vec::new();
    let fail = |epoch, source, rows: &Vec<MetricsRow>| TrainError {
        epoch,
        source,
        rows: rows.clone(),
    };
    let check = || -> Result<()> {
        cfg.validate()?;
        check_len("input width", net.layout().input_width(), data.input_width())?;
        check_len("target width", net.layout().output_width(), data.target_width())
    };
    check().map_err(|e| fail(0, e, &rows))?;

    let n = data.train.len();
    let mut rng = Rng::with_stream(cfg.seed, TRAIN_STREAM);
    let mut settler = Settler::new(net.layout());
    let mut order: Vec<usize> = (0..n).collect();

    for epoch in 1..=cfg.epochs {
        let mut present = |i: usize, net: &mut Network| {
            train_step(net, &mut settler, data.train.input(i), data.train.target(i), cfg)
        };
        let step_result = match cfg.samples_per_epoch {
            SamplesPerEpoch::Draw(m) => (0..m).try_for_each(|_| present(rng.index(n), net)),
            SamplesPerEpoch::FullPass => {
                rng.shuffle(&mut order);
                order.iter().try_for_each(|&i| present(i, net))
            }
        };
        step_result.map_err(|e| fail(epoch, e, &rows))?;

        if epoch % cfg.eval_every == 0 || epoch == cfg.epochs {
            let mut splits = vec![(EvalSplit::Test, &data.test)];
            if cfg.eval_train {
                splits.insert(0, (EvalSplit::Train, &data.train));
            }
            for (phase, samples) in splits {
                let (mse, accuracy) =
                    evaluate(net, samples, &cfg.integrator, cfg.gamma, cfg.accuracy)
                        .map_err(|e| fail(epoch, e, &rows))?;
                let row = MetricsRow {
                    epoch,
                    phase,
                    mse,
                    accuracy,
                };
                observe(&row);
                rows.push(row);
            }
        }
    }
    Ok(rows)
}
