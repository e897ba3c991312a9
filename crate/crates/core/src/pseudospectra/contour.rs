//! Iso-lines of a grid by marching squares.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::PseudospectrumGrid;
use crate::error::{ChlError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Contour {
    /// `log10(ε)`.
    pub level: f64,
    pub epsilon: f64,
    /// Polylines as `[re, im]` points; closed loops repeat their first point.
    pub lines: Vec<Vec<[f64; 2]>>,
}

/// A crossing point is identified by the grid edge it lies on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
enum Edge {
    /// Between `(ix, iy)` and `(ix + 1, iy)`.
    H(usize, usize),
    /// Between `(ix, iy)` and `(ix, iy + 1)`.
    V(usize, usize),
}

/// Contours at each `log10(ε)` in `levels`, which must be sorted ascending.
pub fn contour_levels(grid: &PseudospectrumGrid, levels: &[f64]) -> Result<Vec<Contour>> {
    if levels.is_empty() {
        return Err(ChlError::InvalidConfig("no contour levels given".into()));
    }
    if levels.windows(2).any(|w| !(w[0] < w[1])) || levels.iter().any(|l| !l.is_finite()) {
        return Err(ChlError::InvalidConfig("contour levels must be finite and strictly increasing".into()));
    }
    Ok(levels
        .iter()
        .map(|&level| {
            let epsilon = 10f64.powf(level);
            Contour {
                level,
                epsilon,
                lines: trace(grid, epsilon),
            }
        })
        .collect())
}

fn trace(grid: &PseudospectrumGrid, eps: f64) -> Vec<Vec<[f64; 2]>> {
    let spec = &grid.spec;
    let inside = |ix: usize, iy: usize| grid.value(ix, iy) < eps;
    let point = |e: Edge| -> [f64; 2] {
        let (a, b) = match e {
            Edge::H(ix, iy) => ((ix, iy), (ix + 1, iy)),
            Edge::V(ix, iy) => ((ix, iy), (ix, iy + 1)),
        };
        let (va, vb) = (grid.value(a.0, a.1), grid.value(b.0, b.1));
        let t = if vb == va { 0.5 } else { ((eps - va) / (vb - va)).clamp(0.0, 1.0) };
        let lerp = |p: f64, q: f64| p + t * (q - p);
        [
            lerp(spec.re(a.0), spec.re(b.0)),
            lerp(spec.im(a.1), spec.im(b.1)),
        ]
    };

    let mut segments: Vec<(Edge, Edge)> = Vec::new();
    for iy in 0..spec.ny - 1 {
        for ix in 0..spec.nx - 1 {
            // Corners counter-clockwise from the lower left.
            let c = [
                inside(ix, iy),
                inside(ix + 1, iy),
                inside(ix + 1, iy + 1),
                inside(ix, iy + 1),
            ];
            let bottom = Edge::H(ix, iy);
            let right = Edge::V(ix + 1, iy);
            let top = Edge::H(ix, iy + 1);
            let left = Edge::V(ix, iy);
            let case = c.iter().enumerate().fold(0, |acc, (i, &b)| acc | (usize::from(b) << i));
            match case {
                0 | 15 => {}
                1 | 14 => segments.push((left, bottom)),
                2 | 13 => segments.push((bottom, right)),
                3 | 12 => segments.push((left, right)),
                4 | 11 => segments.push((right, top)),
                6 | 9 => segments.push((bottom, top)),
                7 | 8 => segments.push((left, top)),
                5 | 10 => {
                    let center = 0.25
                        * (grid.value(ix, iy)
                            + grid.value(ix + 1, iy)
                            + grid.value(ix + 1, iy + 1)
                            + grid.value(ix, iy + 1));
                    // Whether the diagonal pair containing the lower-left corner connects.
                    let joined = (center < eps) == c[0];
                    if joined {
                        segments.push((left, top));
                        segments.push((bottom, right));
                    } else {
                        segments.push((left, bottom));
                        segments.push((right, top));
                    }
                }
                _ => unreachable!(),
            }
        }
    }

    join(&segments).into_iter().map(|chain| chain.into_iter().map(point).collect()).collect()
}

/// Links segments sharing an edge into maximal chains.
fn join(segments: &[(Edge, Edge)]) -> Vec<Vec<Edge>> {
    let mut adjacency: HashMap<Edge, Vec<usize>> = HashMap::new();
    for (i, &(a, b)) in segments.iter().enumerate() {
        adjacency.entry(a).or_default().push(i);
        adjacency.entry(b).or_default().push(i);
    }
    let mut used = vec![false; segments.len()];
    let mut chains = Vec::new();

    let other = |i: usize, e: Edge| if segments[i].0 == e { segments[i].1 } else { segments[i].0 };
    let next_unused = |e: Edge, used: &[bool]| adjacency[&e].iter().copied().find(|&j| !used[j]);

    // Open chains start at edges touched by one segment (the grid boundary);
    // the remaining segments form closed loops.
    let mut starts: Vec<usize> = (0..segments.len())
        .filter(|&i| adjacency[&segments[i].0].len() == 1 || adjacency[&segments[i].1].len() == 1)
        .collect();
    starts.extend(0..segments.len());

    for start in starts {
        if used[start] {
            continue;
        }
        let (a, b) = segments[start];
        let head = if adjacency[&a].len() == 1 { a } else if adjacency[&b].len() == 1 { b } else { a };
        let mut chain = vec![head];
        let mut cur = start;
        let mut at = head;
        loop {
            used[cur] = true;
            at = other(cur, at);
            chain.push(at);
            match next_unused(at, &used) {
                Some(j) => cur = j,
                None => break,
            }
        }
        chains.push(chain);
    }
    chains
}

#[cfg(test)]
mod tests {
    use super::super::{compute_grid, GridSpec};
    use super::*;
    use crate::linalg::Mat;

    fn radial_grid(n: usize) -> PseudospectrumGrid {
        let spec = GridSpec { re_min: -1.0, re_max: 1.0, im_min: -1.0, im_max: 1.0, nx: n, ny: n };
        compute_grid(&Mat::zeros(3, 2), spec).unwrap()
    }

    #[test]
    fn empty_levels_rejected() {
        assert!(contour_levels(&radial_grid(5), &[]).is_err());
        assert!(contour_levels(&radial_grid(5), &[-1.0, -2.0]).is_err());
    }

    #[test]
    fn level_below_minimum_is_empty() {
        let g = radial_grid(6);
        let lowest = g.min_value().log10() - 1.0;
        let c = contour_levels(&g, &[lowest]).unwrap();
        assert!(c[0].lines.is_empty());
    }

    #[test]
    fn circle_closes() {
        let g = radial_grid(41);
        let c = contour_levels(&g, &[0.5f64.log10()]).unwrap();
        assert_eq!(c[0].lines.len(), 1);
        let line = &c[0].lines[0];
        assert_eq!(line.first(), line.last());
        assert!(line.len() > 20);
    }
}
