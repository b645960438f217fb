use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// A weight matrix regrouped into row-wise 1x2 pairs.
///
/// Rows with an odd column count get one extra column whose value is the
/// mean of the second coordinate of every complete pair in that row, so each
/// row holds exactly `padded_cols / 2` pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct PairField {
    rows: usize,
    original_cols: usize,
    padded_cols: usize,
    values: Vec<f32>,
}

impl PairField {
    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn original_cols(&self) -> usize {
        self.original_cols
    }

    #[inline]
    pub fn padded_cols(&self) -> usize {
        self.padded_cols
    }

    #[inline]
    pub fn pad_applied(&self) -> bool {
        self.padded_cols != self.original_cols
    }

    #[inline]
    pub fn pairs_per_row(&self) -> usize {
        self.padded_cols / 2
    }

    /// Total pair count `G = K * N' / 2`.
    #[inline]
    pub fn len(&self) -> usize {
        self.values.len() / 2
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn pair(&self, g: usize) -> [f32; 2] {
        [self.values[2 * g], self.values[2 * g + 1]]
    }

    pub fn pairs(&self) -> impl ExactSizeIterator<Item = [f32; 2]> + Clone + '_ {
        self.values.chunks_exact(2).map(|p| [p[0], p[1]])
    }

    /// Padded values of row `k`, length `padded_cols`.
    #[inline]
    pub fn row(&self, k: usize) -> &[f32] {
        &self.values[k * self.padded_cols..(k + 1) * self.padded_cols]
    }

    /// The padded matrix as a flat row-major slice.
    #[inline]
    pub fn as_slice(&self) -> &[f32] {
        &self.values
    }
}

/// Value appended to an odd-length row.
///
/// For `N >= 3` this is `2 * sum(row[1], row[3], ..., row[N-2]) / (N - 1)`;
/// a single-element row pads with the element itself.
pub fn pad_value(row: &[f32]) -> f32 {
    let n = row.len();
    debug_assert!(n % 2 == 1);
    if n == 1 {
        return row[0];
    }
    let sum: f64 = row.iter().skip(1).step_by(2).take((n - 1) / 2).map(|&v| v as f64).sum();
    (2.0 * sum / (n - 1) as f64) as f32
}

/// Regroup `w` into pairs, padding one column when the width is odd.
pub fn pair_split(w: &Matrix) -> Result<PairField> {
    let (rows, cols) = w.shape();
    if rows == 0 || cols == 0 {
        return Err(Error::shape(format!("cannot pair an empty {rows}x{cols} matrix")));
    }
    for (i, v) in w.as_slice().iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::NonFinite { row: i / cols, col: i % cols });
        }
    }
    let padded_cols = cols + cols % 2;
    let values = if padded_cols == cols {
        w.as_slice().to_vec()
    } else {
        let mut values = Vec::with_capacity(rows * padded_cols);
        for k in 0..rows {
            let row = w.row(k);
            values.extend_from_slice(row);
            values.push(pad_value(row));
        }
        values
    };
    Ok(PairField { rows, original_cols: cols, padded_cols, values })
}
