//! Contrastive Hebbian learning with symmetric or fixed random feedback,
//! simulated as forward-Euler settling of coupled layer dynamics.

pub mod baselines;
pub mod datasets;
pub mod dynamics;
pub mod error;
pub mod learning;
pub mod linalg;
pub mod metrics;
pub mod network;
pub mod pseudospectra;
pub mod rng;
pub mod svd;

pub use dynamics::{IntegratorConfig, LayerStates, Phase, PhasePair, Settler};
pub use error::{ChlError, Result};
pub use linalg::{Mat, Vector};
pub use network::{init_network, Activation, BiasInit, FeedbackMode, Layout, Network};
pub use rng::{DistSpec, Rng};
