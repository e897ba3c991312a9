//! Singular values by one-sided (Hestenes) Jacobi rotations.
//!
//! Column pairs are orthogonalized until every pair is numerically orthogonal;
//! the singular values are then the column norms. The method has high relative
//! accuracy, which matters near the small singular values the pseudospectrum
//! contours are drawn at.

use crate::error::{check_len, Result};
use crate::linalg::{dot, Mat};

const MAX_SWEEPS: usize = 80;

/// All `min(rows, cols)` singular values of `m`, in descending order.
pub fn singular_values(m: &Mat) -> Vec<f64> {
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return Vec::new();
    }
    // Work on the orientation with at least as many rows as columns; the
    // nonzero singular values of A and Aᵀ coincide.
    let (height, width, columns) = if rows >= cols {
        (rows, cols, column_major(m))
    } else {
        (cols, rows, column_major(&m.transpose()))
    };
    jacobi_column_norms(height, width, columns)
}

/// Smallest singular value of `m`.
pub fn sigma_min(m: &Mat) -> f64 {
    singular_values(m).last().copied().unwrap_or(0.0)
}

/// Largest singular value (spectral norm) of `m`.
pub fn sigma_max(m: &Mat) -> f64 {
    singular_values(m).first().copied().unwrap_or(0.0)
}

/// Real block embedding `[[Re, −Im], [Im, Re]]` of a complex matrix.
pub fn complex_embedding(re: &Mat, im: &Mat) -> Result<Mat> {
    check_len("complex_embedding (rows)", re.rows(), im.rows())?;
    check_len("complex_embedding (cols)", re.cols(), im.cols())?;
    let (r, c) = re.shape();
    let mut e = Mat::zeros(2 * r, 2 * c);
    for i in 0..r {
        for j in 0..c {
            let (a, b) = (re.get(i, j), im.get(i, j));
            e.set(i, j, a);
            e.set(i, j + c, -b);
            e.set(i + r, j, b);
            e.set(i + r, j + c, a);
        }
    }
    Ok(e)
}

/// Singular values of the complex matrix `re + i·im`, descending.
///
/// Every singular value of the complex matrix appears twice among those of the
/// real embedding; the pairs are collapsed here.
pub fn complex_singular_values(re: &Mat, im: &Mat) -> Result<Vec<f64>> {
    let embedded = complex_embedding(re, im)?;
    let doubled = singular_values(&embedded);
    Ok(doubled.chunks(2).map(|pair| pair[pair.len() - 1]).collect())
}

/// Smallest singular value of the complex matrix `m_real + i·m_imag`.
pub fn sigma_min_complex_embed(m_real: &Mat, m_imag: &Mat) -> Result<f64> {
    let embedded = complex_embedding(m_real, m_imag)?;
    Ok(sigma_min(&embedded))
}

fn column_major(m: &Mat) -> Vec<f64> {
    let (rows, cols) = m.shape();
    let mut out = vec![0.0; rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            out[j * rows + i] = m.get(i, j);
        }
    }
    out
}

fn jacobi_column_norms(height: usize, width: usize, mut a: Vec<f64>) -> Vec<f64> {
    let tol = f64::EPSILON * height as f64;
    let mut norms: Vec<f64> = (0..width)
        .map(|j| {
            let col = &a[j * height..(j + 1) * height];
            dot(col, col)
        })
        .collect();

    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..width.saturating_sub(1) {
            for q in p + 1..width {
                let (head, tail) = a.split_at_mut(q * height);
                let cp = &mut head[p * height..(p + 1) * height];
                let cq = &mut tail[..height];
                let alpha = norms[p];
                let beta = norms[q];
                let gamma = dot(cp, cq);
                if gamma == 0.0 || gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
                    let (xp, yq) = (*x, *y);
                    *x = c * xp - s * yq;
                    *y = s * xp + c * yq;
                }
                norms[p] = dot(cp, cp);
                norms[q] = dot(cq, cq);
            }
        }
        if !rotated {
            break;
        }
    }

    let mut sv: Vec<f64> = norms.iter().map(|n| n.sqrt()).collect();
    sv.sort_by(|x, y| y.total_cmp(x));
    sv
}
