use thiserror::Error;

pub type Result<T> = std::result::Result<T, ChlError>;

/// Errors raised by the numeric core.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChlError {
    #[error("dimension mismatch in {op}: expected {expected}, got {got}")]
    DimensionMismatch {
        op: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid layout: {0}")]
    InvalidLayout(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("layer index {index} outside 1..={max}")]
    LayerOutOfRange { index: usize, max: usize },

    /// A settle produced a non-finite or runaway activity.
    #[error("activity diverged in layer {layer} at Euler step {step}")]
    Diverged { layer: usize, step: usize },

    #[error("non-finite weight update in layer {layer}")]
    NonFiniteUpdate { layer: usize },

    #[error("malformed data: {0}")]
    DataFormat(String),

    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

impl ChlError {
    pub fn is_divergence(&self) -> bool {
        matches!(
            self,
            ChlError::Diverged { .. } | ChlError::NonFiniteUpdate { .. }
        )
    }
}

pub(crate) fn check_len(op: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(ChlError::DimensionMismatch { op, expected, got })
    }
}
