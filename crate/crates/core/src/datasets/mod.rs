//! Training and test sets: XOR, bars and stripes, MNIST-family IDX files and
//! autoencoder pairs.

mod idx;
mod synthetic;

pub use idx::{load_idx, load_mnist_family, read_idx, write_idx, IdxArray, IdxOptions, MnistFamily};
pub use synthetic::{make_bars_stripes, make_xor};

use crate::error::{check_len, ChlError, Result};

/// Input/target pairs stored contiguously, one row per sample.
#[derive(Clone, Debug, PartialEq)]
pub struct Samples {
    input_width: usize,
    target_width: usize,
    inputs: Vec<f64>,
    targets: Vec<f64>,
}

impl Samples {
    pub fn new(input_width: usize, target_width: usize) -> Self {
        Samples {
            input_width,
            target_width,
            inputs: Vec::new(),
            targets: Vec::new(),
        }
    }

    pub fn from_rows<I: AsRef<[f64]>, T: AsRef<[f64]>>(inputs: &[I], targets: &[T]) -> Result<Self> {
        check_len("sample count", inputs.len(), targets.len())?;
        let first_in = inputs.first().map_or(0, |v| v.as_ref().len());
        let first_t = targets.first().map_or(0, |v| v.as_ref().len());
        let mut s = Samples::new(first_in, first_t);
        for (i, t) in inputs.iter().zip(targets) {
            s.push(i.as_ref(), t.as_ref())?;
        }
        Ok(s)
    }

    pub fn push(&mut self, input: &[f64], target: &[f64]) -> Result<()> {
        check_len("input width", self.input_width, input.len())?;
        check_len("target width", self.target_width, target.len())?;
        self.inputs.extend_from_slice(input);
        self.targets.extend_from_slice(target);
        Ok(())
    }

    pub fn len(&self) -> usize {
        if self.input_width == 0 {
            0
        } else {
            self.inputs.len() / self.input_width
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn input_width(&self) -> usize {
        self.input_width
    }

    pub fn target_width(&self) -> usize {
        self.target_width
    }

    pub fn input(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.input_width..(i + 1) * self.input_width]
    }

    pub fn target(&self, i: usize) -> &[f64] {
        &self.targets[i * self.target_width..(i + 1) * self.target_width]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], &[f64])> {
        (0..self.len()).map(move |i| (self.input(i), self.target(i)))
    }

    /// The first `n` samples (all of them if fewer exist).
    pub fn truncated(&self, n: usize) -> Samples {
        let n = n.min(self.len());
        Samples {
            input_width: self.input_width,
            target_width: self.target_width,
            inputs: self.inputs[..n * self.input_width].to_vec(),
            targets: self.targets[..n * self.target_width].to_vec(),
        }
    }

    /// Same inputs, each target replaced by a copy of its input.
    pub fn autoencoder_pairs(&self) -> Samples {
        Samples {
            input_width: self.input_width,
            target_width: self.input_width,
            inputs: self.inputs.clone(),
            targets: self.inputs.clone(),
        }
    }

    /// Smallest and largest entry across all inputs and targets.
    pub fn value_range(&self) -> (f64, f64) {
        self.inputs
            .iter()
            .chain(&self.targets)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub train: Samples,
    pub test: Samples,
}

impl Dataset {
    pub fn new(name: impl Into<String>, train: Samples, test: Samples) -> Result<Self> {
        check_len("test input width", train.input_width(), test.input_width())?;
        check_len("test target width", train.target_width(), test.target_width())?;
        if train.is_empty() {
            return Err(ChlError::DataFormat("training set is empty".into()));
        }
        Ok(Dataset {
            name: name.into(),
            train,
            test,
        })
    }

    pub fn input_width(&self) -> usize {
        self.train.input_width()
    }

    pub fn target_width(&self) -> usize {
        self.train.target_width()
    }
}

/// Reconstruction task: targets become copies of the inputs in both splits.
pub fn make_autoencoder_pairs(d: &Dataset) -> Dataset {
    Dataset {
        name: format!("{}-autoencoder", d.name),
        train: d.train.autoencoder_pairs(),
        test: d.test.autoencoder_pairs(),
    }
}

/// One-hot vector of length `n` with a 1 at `class`.
pub fn one_hot(class: usize, n: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[class] = 1.0;
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn autoencoder_targets_copy_inputs() {
        let d = make_bars_stripes();
        let a = make_autoencoder_pairs(&d);
        assert_eq!(a.train.len(), d.train.len());
        assert_eq!(a.test.len(), d.test.len());
        for (i, t) in a.train.iter() {
            assert_eq!(i, t);
        }
        assert_eq!(a.target_width(), 16);
    }

    #[test]
    fn push_checks_widths() {
        let mut s = Samples::new(2, 1);
        assert!(s.push(&[0.0, 1.0], &[1.0]).is_ok());
        assert!(s.push(&[0.0], &[1.0]).is_err());
        assert_eq!(s.len(), 1);
    }

    #[test]
    fn truncation_keeps_prefix() {
        let d = make_bars_stripes();
        let t = d.train.truncated(5);
        assert_eq!(t.len(), 5);
        assert_eq!(t.input(4), d.train.input(4));
        assert_eq!(d.train.truncated(100).len(), 32);
    }
}
