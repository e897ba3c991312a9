//! ε-pseudospectra of rectangular matrices.
//!
//! For `V` of shape `m × n` and `Ĩ` the `m × n` pseudo-identity, the grid holds
//! `σ_min(zĨ − V)` at each grid point `z`; the ε-pseudospectrum is the sublevel
//! set `{z : σ_min(zĨ − V) ≤ ε}`.

mod contour;

pub use contour::{contour_levels, Contour};

use serde::{Deserialize, Serialize};

use crate::error::{ChlError, Result};
use crate::linalg::Mat;
use crate::svd::{sigma_max, sigma_min_complex_embed};

/// Default number of grid points per axis.
pub const DEFAULT_POINTS: usize = 101;

/// Default half-width of the grid box relative to the spectral norm.
pub const DEFAULT_MARGIN: f64 = 1.25;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub re_min: f64,
    pub re_max: f64,
    pub im_min: f64,
    pub im_max: f64,
    pub nx: usize,
    pub ny: usize,
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.re_min, self.re_max, self.im_min, self.im_max]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.re_min >= self.re_max || self.im_min >= self.im_max {
            return Err(ChlError::InvalidConfig(format!(
                "grid box must satisfy re_min < re_max and im_min < im_max, got {self:?}"
            )));
        }
        if self.nx < 2 || self.ny < 2 {
            return Err(ChlError::InvalidConfig("grid needs at least 2 points per axis".into()));
        }
        Ok(())
    }

    /// Square box centered at the origin with half-width `margin·‖v‖₂`
    /// (1 for the zero matrix).
    pub fn around(v: &Mat, points: usize, margin: f64) -> Self {
        let norm = sigma_max(v);
        let r = if norm > 0.0 { margin * norm } else { 1.0 };
        GridSpec {
            re_min: -r,
            re_max: r,
            im_min: -r,
            im_max: r,
            nx: points,
            ny: points,
        }
    }

    pub fn re(&self, ix: usize) -> f64 {
        self.re_min + (self.re_max - self.re_min) * ix as f64 / (self.nx - 1) as f64
    }

    pub fn im(&self, iy: usize) -> f64 {
        self.im_min + (self.im_max - self.im_min) * iy as f64 / (self.ny - 1) as f64
    }

    pub fn cell_size(&self) -> (f64, f64) {
        (
            (self.re_max - self.re_min) / (self.nx - 1) as f64,
            (self.im_max - self.im_min) / (self.ny - 1) as f64,
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PseudospectrumGrid {
    pub spec: GridSpec,
    /// Row-major by imaginary part: `values[iy * nx + ix]`.
    pub values: Vec<f64>,
}

impl PseudospectrumGrid {
    pub fn value(&self, ix: usize, iy: usize) -> f64 {
        self.values[iy * self.spec.nx + ix]
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `re,im,sigma_min` lines with a header, 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("re,im,sigma_min\n");
        for iy in 0..self.spec.ny {
            for ix in 0..self.spec.nx {
                out.push_str(&format!(
                    "{:.16e},{:.16e},{:.16e}\n",
                    self.spec.re(ix),
                    self.spec.im(iy),
                    self.value(ix, iy)
                ));
            }
        }
        out
    }
}

/// `rows × cols` matrix with ones on the main diagonal.
pub fn pseudo_identity(rows: usize, cols: usize) -> Mat {
    let mut m = Mat::zeros(rows, cols);
    for i in 0..rows.min(cols) {
        m.set(i, i, 1.0);
    }
    m
}

/// `σ_min(zĨ − V)` for `z = re + i·im`.
pub fn sigma_min_at(v: &Mat, re: f64, im: f64) -> Result<f64> {
    let (m, n) = v.shape();
    let mut real = Mat::zeros(m, n);
    let mut imag = Mat::zeros(m, n);
    for i in 0..m {
        for j in 0..n {
            real.set(i, j, -v.get(i, j));
        }
    }
    for i in 0..m.min(n) {
        real.set(i, i, real.get(i, i) + re);
        imag.set(i, i, im);
    }
    sigma_min_complex_embed(&real, &imag)
}

pub fn compute_grid(v: &Mat, spec: GridSpec) -> Result<PseudospectrumGrid> {
    spec.validate()?;
    if !v.is_finite() {
        return Err(ChlError::InvalidConfig("matrix has non-finite entries".into()));
    }
    let mut values = Vec::with_capacity(spec.nx * spec.ny);
    for iy in 0..spec.ny {
        for ix in 0..spec.nx {
            values.push(sigma_min_at(v, spec.re(ix), spec.im(iy))?);
        }
    }
    Ok(PseudospectrumGrid { spec, values })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pseudo_identity_shapes() {
        assert_eq!(pseudo_identity(3, 3), Mat::identity(3));
        let t = pseudo_identity(3, 2);
        assert_eq!(t.as_slice(), &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        for j in 0..2 {
            let mut e = vec![0.0; 2];
            e[j] = 1.0;
            let y = t.matvec(&e).unwrap();
            assert_eq!(&y[..2], e.as_slice());
            assert_eq!(y[2], 0.0);
        }
    }

    #[test]
    fn distance_to_eigenvalue_of_diagonal() {
        let v = Mat::diag(&[1.0, 2.0]);
        assert!((sigma_min_at(&v, 1.5, 0.0).unwrap() - 0.5).abs() < 1e-14);
        assert!((sigma_min_at(&v, 2.0, 3.0).unwrap() - 3.0).abs() < 1e-14);
    }

    #[test]
    fn zero_matrix_gives_modulus() {
        let v = Mat::zeros(4, 2);
        let spec = GridSpec::around(&v, 5, DEFAULT_MARGIN);
        let g = compute_grid(&v, spec).unwrap();
        for iy in 0..5 {
            for ix in 0..5 {
                let z = spec.re(ix).hypot(spec.im(iy));
                assert!((g.value(ix, iy) - z).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn grid_validation() {
        let bad = GridSpec { re_min: 1.0, re_max: 0.0, im_min: 0.0, im_max: 1.0, nx: 3, ny: 3 };
        assert!(bad.validate().is_err());
        let coarse = GridSpec { re_min: 0.0, re_max: 1.0, im_min: 0.0, im_max: 1.0, nx: 1, ny: 3 };
        assert!(compute_grid(&Mat::zeros(2, 2), coarse).is_err());
    }

    #[test]
    fn default_box_scales_with_norm() {
        let spec = GridSpec::around(&Mat::diag(&[2.0, -4.0]), DEFAULT_POINTS, DEFAULT_MARGIN);
        assert!((spec.re_max - 5.0).abs() < 1e-12);
        assert_eq!(spec.nx, 101);
        assert_eq!(spec.re(50), 0.0);
    }
}
