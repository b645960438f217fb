use super::params::{AuxParams, CodebookKind};
use crate::error::{Error, Result};

/// The `U` codewords inside the box, plus per-axis coordinates for a grid.
#[derive(Debug, Clone)]
pub struct Codebook {
    aux: AuxParams,
    points: Vec<[f64; 2]>,
    axes: Option<GridAxes>,
}

#[derive(Debug, Clone)]
struct GridAxes {
    side: usize,
    cell: f64,
    min: [f64; 2],
    xs: Vec<f64>,
    ys: Vec<f64>,
}

impl Codebook {
    #[inline]
    pub fn params(&self) -> &AuxParams {
        &self.aux
    }

    #[inline]
    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.points.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    #[inline]
    pub fn point(&self, theta: u32) -> [f64; 2] {
        self.points[theta as usize]
    }

    /// Per-axis lattice coordinates `(xs, ys)`, `None` for a trajectory.
    pub fn grid_axes(&self) -> Option<(&[f64], &[f64])> {
        self.axes.as_ref().map(|a| (a.xs.as_slice(), a.ys.as_slice()))
    }

    /// Index of the codeword closest to `p` in Euclidean distance, smallest
    /// index on ties.
    #[inline]
    pub fn nearest(&self, p: [f64; 2]) -> u32 {
        match &self.axes {
            Some(axes) => nearest_on_grid(axes, p),
            None => self.nearest_exhaustive(p),
        }
    }

    /// Linear scan over every codeword.
    pub fn nearest_exhaustive(&self, p: [f64; 2]) -> u32 {
        let mut best = 0u32;
        let mut best_d = f64::INFINITY;
        for (theta, c) in self.points.iter().enumerate() {
            let d = sq_dist(p, *c);
            if d < best_d {
                best_d = d;
                best = theta as u32;
            }
        }
        best
    }
}

#[inline]
fn sq_dist(p: [f64; 2], c: [f64; 2]) -> f64 {
    let dx = p[0] - c[0];
    let dy = p[1] - c[1];
    dx * dx + dy * dy
}

/// Candidate window `[lo, hi]` on one axis around the cell containing `x`.
#[inline]
fn axis_window(x: f64, min: f64, cell: f64, side: usize) -> (usize, usize) {
    let f = ((x - min) / cell).floor();
    let last = (side - 1) as f64;
    let i = if f.is_nan() { 0.0 } else { f.clamp(0.0, last) } as usize;
    (i.saturating_sub(1), (i + 1).min(side - 1))
}

// Squared distance on an axis-aligned lattice separates by axis, so the
// exhaustive minimum lies in the 3x3 window around the containing cell.
// Scoring that window with the exhaustive scan's expression and order keeps
// the result identical to it, ties included.
#[inline]
fn nearest_on_grid(axes: &GridAxes, p: [f64; 2]) -> u32 {
    let (x0, x1) = axis_window(p[0], axes.min[0], axes.cell, axes.side);
    let (y0, y1) = axis_window(p[1], axes.min[1], axes.cell, axes.side);
    let mut best = 0usize;
    let mut best_d = f64::INFINITY;
    for iy in y0..=y1 {
        let y = axes.ys[iy];
        for ix in x0..=x1 {
            let d = sq_dist(p, [axes.xs[ix], y]);
            if d < best_d {
                best_d = d;
                best = iy * axes.side + ix;
            }
        }
    }
    best as u32
}

/// Materializes the codebook described by `aux`.
pub fn build_codebook(aux: &AuxParams) -> Result<Codebook> {
    aux.validate()?;
    let u = aux.codebook_size as usize;
    let min = aux.box_min();
    let l = aux.box_len;
    match aux.kind {
        CodebookKind::GridLattice => {
            let side = aux.grid_side() as usize;
            let cell = l / side as f64;
            let xs: Vec<f64> = (0..side).map(|i| min[0] + (i as f64 + 0.5) * cell).collect();
            let ys: Vec<f64> = (0..side).map(|i| min[1] + (i as f64 + 0.5) * cell).collect();
            let points = (0..u).map(|t| [xs[t % side], ys[t / side]]).collect();
            Ok(Codebook {
                aux: *aux,
                points,
                axes: Some(GridAxes { side, cell, min, xs, ys }),
            })
        }
        CodebookKind::LiteralTrajectory => {
            let dx = l / u as f64;
            let norm = (dx * dx + l * l).sqrt();
            let dir = [dx / norm, l / norm];
            let points = (0..u)
                .map(|t| {
                    let t = t as f64 * aux.step;
                    [min[0] + wrap(t * dir[0], l), min[1] + wrap(t * dir[1], l)]
                })
                .collect::<Vec<_>>();
            if points.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
                return Err(Error::param("trajectory produced non-finite codewords"));
            }
            Ok(Codebook { aux: *aux, points, axes: None })
        }
    }
}

#[inline]
fn wrap(x: f64, l: f64) -> f64 {
    let r = x.rem_euclid(l);
    // rem_euclid may round up to exactly l
    if r >= l { 0.0 } else { r }
}
