//! Forward-Euler settling of the coupled layer dynamics
//!
//! ```text
//! dx_k/dt = −x_k + f(W_k·x_{k−1} + γ·V_k·x_{k+1} + b_k)
//! ```
//!
//! in a clamped phase (input and output held) followed by a free phase
//! (only the input held, warm-started from the clamped equilibrium).
//!
//! Every Euler sweep updates all dynamic layers from the previous sweep's values
//! (a synchronous, Jacobi-style step), so results do not depend on the order the
//! layers are visited in.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, ChlError, Result};
use crate::linalg::Vector;
use crate::network::{Layout, Network};

/// Activities beyond this magnitude count as divergence.
pub const DIVERGENCE_BOUND: f64 = 1e6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub dt: f64,
    pub t_f: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig { dt: 0.08, t_f: 30.0 }
    }
}

impl IntegratorConfig {
    pub fn new(dt: f64, t_f: f64) -> Result<Self> {
        let cfg = IntegratorConfig { dt, t_f };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(ChlError::InvalidConfig(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_f.is_finite() && self.t_f >= self.dt) {
            return Err(ChlError::InvalidConfig(format!(
                "t_f must be at least dt, got t_f = {} with dt = {}",
                self.t_f, self.dt
            )));
        }
        Ok(())
    }

    /// `floor(t_f / dt)`, robust to the quotient landing one ulp below an integer.
    pub fn steps(&self) -> usize {
        let q = self.t_f / self.dt;
        let nearest = q.round();
        let steps = if (q - nearest).abs() <= 1e-9 * nearest.max(1.0) {
            nearest
        } else {
            q.floor()
        };
        (steps as usize).max(1)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Clamped,
    Free,
}

/// Activities of every layer, `x[0]` being the input slot.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerStates {
    x: Vec<Vector>,
}

impl LayerStates {
    pub fn zeros(layout: &Layout) -> Self {
        LayerStates {
            x: layout.sizes().iter().map(|&n| Vector::zeros(n)).collect(),
        }
    }

    /// Zero states with the input written to layer 0.
    pub fn with_input(layout: &Layout, input: &[f64]) -> Result<Self> {
        let mut s = Self::zeros(layout);
        check_len("input", layout.input_width(), input.len())?;
        s.x[0].copy_from_slice(input);
        Ok(s)
    }

    pub fn from_layers(layers: Vec<Vector>) -> Self {
        LayerStates { x: layers }
    }

    pub fn layer(&self, k: usize) -> &Vector {
        &self.x[k]
    }

    pub fn layer_mut(&mut self, k: usize) -> &mut Vector {
        &mut self.x[k]
    }

    pub fn layers(&self) -> &[Vector] {
        &self.x
    }

    pub fn output(&self) -> &Vector {
        &self.x[self.x.len() - 1]
    }

    fn check_layout(&self, layout: &Layout) -> Result<()> {
        check_len("layer count", layout.sizes().len(), self.x.len())?;
        for (x, &n) in self.x.iter().zip(layout.sizes()) {
            check_len("layer width", n, x.len())?;
        }
        Ok(())
    }
}

/// Clamped (`x̂`) and free (`x̌`) equilibria for one sample.
#[derive(Clone, Debug, PartialEq)]
pub struct PhasePair {
    pub clamped: LayerStates,
    pub free: LayerStates,
}

/// One Euler update of layer `k` with the configured step size.
pub fn euler_step(
    net: &Network,
    states: &LayerStates,
    k: usize,
    gamma: f64,
    cfg: &IntegratorConfig,
    clamp_output: bool,
) -> Result<Vector> {
    euler_update(net, states, k, gamma, cfg.dt, clamp_output)
}

/// `x_k + dt·(−x_k + f(W_k·x_{k−1} + γ·V_k·x_{k+1} + b_k))`, the feedback term
/// omitted for the output layer. `dt` is not validated, so negative steps are
/// allowed here.
pub fn euler_update(
    net: &Network,
    states: &LayerStates,
    k: usize,
    gamma: f64,
    dt: f64,
    clamp_output: bool,
) -> Result<Vector> {
    let depth = net.depth();
    let max = if clamp_output { depth - 1 } else { depth };
    if k == 0 || k > max {
        return Err(ChlError::LayerOutOfRange { index: k, max });
    }
    states.check_layout(net.layout())?;
    let n = net.layout().width(k);
    let mut ff = vec![0.0; n];
    net.weight(k).matvec_into(states.layer(k - 1), &mut ff);
    let fb = if k < depth {
        let mut fb = vec![0.0; n];
        net.feedback_matvec_into(k, states.layer(k + 1), &mut fb);
        Some(fb)
    } else {
        None
    };
    let mut out = Vector::zeros(n);
    integrate_layer(
        net,
        k,
        gamma,
        dt,
        &ff,
        fb.as_deref(),
        states.layer(k),
        &mut out,
    );
    Ok(out)
}

#[inline]
#[allow(clippy::too_many_arguments)]
fn integrate_layer(
    net: &Network,
    k: usize,
    gamma: f64,
    dt: f64,
    ff: &[f64],
    fb: Option<&[f64]>,
    x: &[f64],
    out: &mut [f64],
) {
    let act = net.activation();
    let b = net.bias(k);
    match fb {
        Some(fb) => {
            for i in 0..out.len() {
                let drive = (ff[i] + gamma * fb[i]) + b[i];
                out[i] = x[i] + dt * (-x[i] + act.apply(drive));
            }
        }
        None => {
            for i in 0..out.len() {
                let drive = ff[i] + b[i];
                out[i] = x[i] + dt * (-x[i] + act.apply(drive));
            }
        }
    }
}

/// Runs `cfg.steps()` synchronous sweeps over layers `1..L−1` (clamped) or
/// `1..L` (free) and returns the final states.
pub fn settle(
    net: &Network,
    states: LayerStates,
    cfg: &IntegratorConfig,
    gamma: f64,
    phase: Phase,
) -> Result<LayerStates> {
    states.check_layout(net.layout())?;
    let mut settler = Settler::new(net.layout());
    settler.load(&states);
    settler.settle(net, cfg, gamma, phase)?;
    Ok(settler.current_states())
}

/// Clamped settle, then a free settle warm-started from the clamped equilibrium.
pub fn run_phases(
    net: &Network,
    input: &[f64],
    target: &[f64],
    cfg: &IntegratorConfig,
    gamma: f64,
) -> Result<PhasePair> {
    let mut settler = Settler::new(net.layout());
    settler.run_phases(net, input, target, cfg, gamma)?;
    Ok(settler.phase_pair())
}

/// Free settle from rest with only the input presented.
pub fn free_response(
    net: &Network,
    input: &[f64],
    cfg: &IntegratorConfig,
    gamma: f64,
) -> Result<Vector> {
    let mut settler = Settler::new(net.layout());
    Ok(Vector::from_slice(settler.free_response(net, input, cfg, gamma)?))
}

/// Reusable buffers for settling one network layout.
///
/// Drives from layers that stay fixed for a whole phase (the input, and the
/// clamped output) are computed once per phase instead of every sweep.
#[derive(Clone, Debug)]
pub struct Settler {
    sizes: Vec<usize>,
    cur: Vec<Vec<f64>>,
    next: Vec<Vec<f64>>,
    ff: Vec<Vec<f64>>,
    fb: Vec<Vec<f64>>,
    clamped: Vec<Vec<f64>>,
}

impl Settler {
    pub fn new(layout: &Layout) -> Self {
        let zeros: Vec<Vec<f64>> = layout.sizes().iter().map(|&n| vec![0.0; n]).collect();
        Settler {
            sizes: layout.sizes().to_vec(),
            cur: zeros.clone(),
            next: zeros.clone(),
            ff: zeros.clone(),
            fb: zeros.clone(),
            clamped: zeros,
        }
    }

    fn depth(&self) -> usize {
        self.sizes.len() - 1
    }

    fn load(&mut self, states: &LayerStates) {
        for (dst, src) in self.cur.iter_mut().zip(states.layers()) {
            dst.copy_from_slice(src);
        }
    }

    fn reset(&mut self, input: &[f64]) -> Result<()> {
        check_len("input", self.sizes[0], input.len())?;
        for layer in &mut self.cur {
            layer.fill(0.0);
        }
        self.cur[0].copy_from_slice(input);
        Ok(())
    }

    /// Integrates one phase in place.
    pub fn settle(
        &mut self,
        net: &Network,
        cfg: &IntegratorConfig,
        gamma: f64,
        phase: Phase,
    ) -> Result<()> {
        cfg.validate()?;
        check_len("network depth", self.depth(), net.depth())?;
        let depth = self.depth();
        let top = match phase {
            Phase::Clamped => depth - 1,
            Phase::Free => depth,
        };
        if top == 0 {
            return Ok(());
        }
        let dt = cfg.dt;

        // Drives whose source layer is held fixed for the whole phase.
        net.weight(1).matvec_into(&self.cur[0], &mut self.ff[1]);
        let fixed_feedback = phase == Phase::Clamped && top + 1 == depth;
        if fixed_feedback {
            net.feedback_matvec_into(top, &self.cur[depth], &mut self.fb[top]);
        }

        for step in 0..cfg.steps() {
            for k in 1..=top {
                if k > 1 {
                    net.weight(k).matvec_into(&self.cur[k - 1], &mut self.ff[k]);
                }
                let has_feedback = k < depth;
                if has_feedback && !(fixed_feedback && k == top) {
                    net.feedback_matvec_into(k, &self.cur[k + 1], &mut self.fb[k]);
                }
                let fb = has_feedback.then(|| self.fb[k].as_slice());
                integrate_layer(net, k, gamma, dt, &self.ff[k], fb, &self.cur[k], &mut self.next[k]);
            }
            for k in 1..=top {
                if self.next[k].iter().any(|v| !v.is_finite() || v.abs() > DIVERGENCE_BOUND) {
                    return Err(ChlError::Diverged { layer: k, step: step + 1 });
                }
                std::mem::swap(&mut self.cur[k], &mut self.next[k]);
            }
        }
        Ok(())
    }

    /// Clamped then free settle for one sample. Afterwards
    /// [`Settler::clamped_layers`] holds `x̂` and [`Settler::free_layers`] `x̌`.
    pub fn run_phases(
        &mut self,
        net: &Network,
        input: &[f64],
        target: &[f64],
        cfg: &IntegratorConfig,
        gamma: f64,
    ) -> Result<()> {
        let depth = self.depth();
        check_len("target", self.sizes[depth], target.len())?;
        self.reset(input)?;
        self.cur[depth].copy_from_slice(target);
        self.settle(net, cfg, gamma, Phase::Clamped)?;
        for (dst, src) in self.clamped.iter_mut().zip(&self.cur) {
            dst.copy_from_slice(src);
        }
        self.settle(net, cfg, gamma, Phase::Free)
    }

    /// Free settle from rest; returns the output layer.
    pub fn free_response(
        &mut self,
        net: &Network,
        input: &[f64],
        cfg: &IntegratorConfig,
        gamma: f64,
    ) -> Result<&[f64]> {
        self.reset(input)?;
        self.settle(net, cfg, gamma, Phase::Free)?;
        Ok(&self.cur[self.depth()])
    }

    pub fn clamped_layers(&self) -> &[Vec<f64>] {
        &self.clamped
    }

    pub fn free_layers(&self) -> &[Vec<f64>] {
        &self.cur
    }

    pub fn current_states(&self) -> LayerStates {
        LayerStates::from_layers(self.cur.iter().map(|v| Vector::from_slice(v)).collect())
    }

    pub fn phase_pair(&self) -> PhasePair {
        PhasePair {
            clamped: LayerStates::from_layers(
                self.clamped.iter().map(|v| Vector::from_slice(v)).collect(),
            ),
            free: self.current_states(),
        }
    }
}
