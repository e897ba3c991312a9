//! Seeded, stream-splittable random numbers and the weight distributions.

use rand::distr::{Distribution, Uniform};
use rand::{Rng as _, RngCore};
use rand_distr::Normal;
use rand_pcg::Pcg64;
use serde::{Deserialize, Serialize};

use crate::error::{ChlError, Result};
use crate::linalg::{Mat, Vector};

/// Deterministic PCG generator. The same `(seed, stream)` pair yields the same
/// sample sequence on every platform.
#[derive(Clone, Debug)]
pub struct Rng {
    seed: u64,
    stream: u64,
    inner: Pcg64,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let state = (u128::from(splitmix64(seed)) << 64) | u128::from(splitmix64(!seed));
        Rng {
            seed,
            stream,
            inner: Pcg64::new(state, u128::from(stream)),
        }
    }

    /// Derives an independent child generator on `stream`, advancing `self`
    /// by exactly one draw.
    pub fn fork(&mut self, stream: u64) -> Rng {
        let child_seed = self.inner.next_u64();
        Rng::with_stream(child_seed, stream)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform draw in `[0, 1)`.
    pub fn next_f64(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    /// Uniform index in `0..n`. Sampled through `u64` so the stream does not
    /// depend on the platform's pointer width.
    pub fn index(&mut self, n: usize) -> usize {
        assert!(n > 0, "index range must be non-empty");
        self.inner.random_range(0..n as u64) as usize
    }

    /// Fisher–Yates shuffle driven by [`Rng::index`].
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.index(i + 1);
            items.swap(i, j);
        }
    }

    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..n).collect();
        self.shuffle(&mut idx);
        idx
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Distribution of initial weights or feedback entries.
///
/// `Normal::sigma` is the standard deviation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DistSpec {
    Uniform { low: f64, high: f64 },
    Normal { mean: f64, sigma: f64 },
}

impl DistSpec {
    pub fn uniform(low: f64, high: f64) -> Result<Self> {
        let d = DistSpec::Uniform { low, high };
        d.validate()?;
        Ok(d)
    }

    pub fn normal(mean: f64, sigma: f64) -> Result<Self> {
        let d = DistSpec::Normal { mean, sigma };
        d.validate()?;
        Ok(d)
    }

    /// Symmetric uniform `U(-half_width, half_width)`.
    pub fn symmetric_uniform(half_width: f64) -> Result<Self> {
        Self::uniform(-half_width, half_width)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            DistSpec::Uniform { low, high } => {
                if !(low.is_finite() && high.is_finite() && low < high) {
                    return Err(ChlError::InvalidDistribution(format!(
                        "uniform requires finite low < high, got ({low}, {high})"
                    )));
                }
            }
            DistSpec::Normal { mean, sigma } => {
                if !(mean.is_finite() && sigma.is_finite() && sigma > 0.0) {
                    return Err(ChlError::InvalidDistribution(format!(
                        "normal requires finite mean and sigma > 0, got ({mean}, {sigma})"
                    )));
                }
            }
        }
        Ok(())
    }

    fn sampler(&self) -> Result<Sampler> {
        self.validate()?;
        Ok(match *self {
            DistSpec::Uniform { low, high } => Sampler::Uniform(
                Uniform::new(low, high)
                    .map_err(|e| ChlError::InvalidDistribution(e.to_string()))?,
            ),
            DistSpec::Normal { mean, sigma } => Sampler::Normal(
                Normal::new(mean, sigma).map_err(|e| ChlError::InvalidDistribution(e.to_string()))?,
            ),
        })
    }
}

impl std::fmt::Display for DistSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DistSpec::Uniform { low, high } => write!(f, "U({low}, {high})"),
            DistSpec::Normal { mean, sigma } => write!(f, "N({mean}, {sigma})"),
        }
    }
}

enum Sampler {
    Uniform(Uniform<f64>),
    Normal(Normal<f64>),
}

impl Sampler {
    fn draw(&self, rng: &mut Rng) -> f64 {
        match self {
            Sampler::Uniform(u) => u.sample(&mut rng.inner),
            Sampler::Normal(n) => n.sample(&mut rng.inner),
        }
    }
}

/// A `rows × cols` matrix of i.i.d. draws, filled in row-major order.
pub fn sample_mat(rng: &mut Rng, rows: usize, cols: usize, d: &DistSpec) -> Result<Mat> {
    let sampler = d.sampler()?;
    let data = (0..rows * cols).map(|_| sampler.draw(rng)).collect();
    Mat::from_vec(rows, cols, data)
}

pub fn sample_vec(rng: &mut Rng, len: usize, d: &DistSpec) -> Result<Vector> {
    let sampler = d.sampler()?;
    Ok((0..len).map(|_| sampler.draw(rng)).collect::<Vec<_>>().into())
}
