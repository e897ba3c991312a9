//! Evaluation metrics: mean squared error and task accuracy.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, ChlError, Result};

/// How an output counts as correct.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum AccuracyMode {
    /// Class of the largest output equals the class of the largest target.
    Argmax,
    /// Every component within `epsilon` of its target.
    Threshold { epsilon: f64 },
}

/// Which split a metrics row was computed on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalSplit {
    Train,
    Test,
}

impl EvalSplit {
    pub fn as_str(self) -> &'static str {
        match self {
            EvalSplit::Train => "train",
            EvalSplit::Test => "test",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub epoch: usize,
    pub phase: EvalSplit,
    pub mse: f64,
    pub accuracy: f64,
}

/// Mean over every sample and component of the squared error.
pub fn mse<O: AsRef<[f64]>, T: AsRef<[f64]>>(outputs: &[O], targets: &[T]) -> Result<f64> {
    check_len("mse sample count", targets.len(), outputs.len())?;
    if outputs.is_empty() {
        return Err(ChlError::InvalidConfig("mse of an empty set".into()));
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for (o, t) in outputs.iter().zip(targets) {
        let (o, t) = (o.as_ref(), t.as_ref());
        check_len("mse vector length", t.len(), o.len())?;
        total += squared_error(o, t);
        count += o.len();
    }
    Ok(total / count as f64)
}

/// `Σ (o_i − t_i)²` for one sample.
pub fn squared_error(o: &[f64], t: &[f64]) -> f64 {
    o.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

pub fn is_correct(output: &[f64], target: &[f64], mode: AccuracyMode) -> bool {
    match mode {
        AccuracyMode::Argmax => argmax(output) == argmax(target),
        AccuracyMode::Threshold { epsilon } => output
            .iter()
            .zip(target)
            .all(|(o, t)| (o - t).abs() < epsilon),
    }
}

pub fn accuracy<O: AsRef<[f64]>, T: AsRef<[f64]>>(
    outputs: &[O],
    targets: &[T],
    mode: AccuracyMode,
) -> Result<f64> {
    check_len("accuracy sample count", targets.len(), outputs.len())?;
    if outputs.is_empty() {
        return Err(ChlError::InvalidConfig("accuracy of an empty set".into()));
    }
    let mut hits = 0usize;
    for (o, t) in outputs.iter().zip(targets) {
        check_len("accuracy vector length", t.as_ref().len(), o.as_ref().len())?;
        if is_correct(o.as_ref(), t.as_ref(), mode) {
            hits += 1;
        }
    }
    Ok(hits as f64 / outputs.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mse_examples() {
        assert_eq!(mse(&[vec![0.3, 0.7]], &[vec![0.3, 0.7]]).unwrap(), 0.0);
        assert_eq!(mse(&[vec![1.0, 0.0]], &[vec![0.0, 1.0]]).unwrap(), 1.0);
        let m = mse(&[vec![0.5], vec![0.5]], &[vec![0.0], vec![1.0]]).unwrap();
        assert_eq!(m, 0.25);
    }

    #[test]
    fn mse_rejects_mismatch() {
        assert!(mse(&[vec![1.0]], &[vec![1.0, 0.0]]).is_err());
        assert!(mse(&[vec![1.0]], &[vec![1.0], vec![0.0]]).is_err());
    }

    #[test]
    fn accuracy_examples() {
        let t = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        assert_eq!(accuracy(&t, &t, AccuracyMode::Argmax).unwrap(), 1.0);
        assert_eq!(accuracy(&[vec![0.6, 0.4]], &[vec![0.0, 1.0]], AccuracyMode::Argmax).unwrap(), 0.0);
        let eps = AccuracyMode::Threshold { epsilon: 0.01 };
        assert_eq!(accuracy(&[vec![0.005]], &[vec![0.0]], eps).unwrap(), 1.0);
        assert_eq!(accuracy(&[vec![0.02]], &[vec![0.0]], eps).unwrap(), 0.0);
    }

    #[test]
    fn argmax_ties_take_lowest_index() {
        assert_eq!(argmax(&[0.5, 0.5, 0.1]), 0);
        assert_eq!(argmax(&[0.1, 0.7, 0.7]), 1);
    }
}
