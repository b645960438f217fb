use rayon::prelude::*;

use super::codebook::{build_codebook, Codebook};
use super::pairs::{pair_split, PairField};
use super::params::{AuxParams, CodebookKind};
use super::stats::{assign_category, compute_stats, scale_factor, Category};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Integer codes `theta + m * U`, one per pair, shaped `K x N'/2`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodeMatrix {
    rows: usize,
    pair_cols: usize,
    bound: u32,
    codes: Vec<u32>,
}

impl CodeMatrix {
    /// Wraps raw codes, checking shape and range.
    pub fn new(rows: usize, pair_cols: usize, bound: u32, codes: Vec<u32>) -> Result<Self> {
        if rows.checked_mul(pair_cols) != Some(codes.len()) {
            return Err(Error::corrupt(format!(
                "code matrix {rows}x{pair_cols} has {} codes",
                codes.len()
            )));
        }
        if let Some((i, &c)) = codes.iter().enumerate().find(|(_, &c)| c >= bound) {
            return Err(Error::corrupt(format!("code {c} at index {i} is not below bound {bound}")));
        }
        Ok(Self { rows, pair_cols, bound, codes })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn pair_cols(&self) -> usize {
        self.pair_cols
    }

    /// Exclusive upper bound `(M + 1) * U`.
    #[inline]
    pub fn bound(&self) -> u32 {
        self.bound
    }

    #[inline]
    pub fn codes(&self) -> &[u32] {
        &self.codes
    }

    #[inline]
    pub fn get(&self, k: usize, j: usize) -> u32 {
        self.codes[k * self.pair_cols + j]
    }

    pub fn into_codes(self) -> Vec<u32> {
        self.codes
    }
}

/// Splits a code into `(category, theta)`.
#[inline]
pub fn split_code(code: u32, codebook_size: u32) -> (Category, u32) {
    (code / codebook_size, code % codebook_size)
}

#[inline]
fn shrink(v: f64, center: f64, s: f64) -> f64 {
    (v - center) * s + center
}

#[inline]
fn unshrink(v: f64, center: f64, s: f64) -> f64 {
    (v - center) / s + center
}

/// Point actually looked up in the codebook: the pair pulled toward the
/// centroid by its category's scale factor.
pub fn scaled_point(pair: [f64; 2], aux: &AuxParams) -> Result<([f64; 2], Category)> {
    let m = assign_category(pair, &aux.stats, aux.box_len, aux.categories)?;
    if m == 0 {
        return Ok((pair, 0));
    }
    let s = scale_factor(m, aux.categories, aux.box_len, aux.stats.farthest)?;
    let c = aux.stats.centroid;
    Ok(([shrink(pair[0], c[0], s), shrink(pair[1], c[1], s)], m))
}

/// Encodes one pair as `theta + m * U`.
#[inline]
pub fn encode_pair(pair: [f64; 2], aux: &AuxParams, cb: &Codebook) -> Result<u32> {
    let (p, m) = scaled_point(pair, aux)?;
    Ok(cb.nearest(p) + m * aux.codebook_size)
}

/// Reconstructs the pair stored under `code`.
pub fn decode_pair(code: u32, aux: &AuxParams, cb: &Codebook) -> Result<[f64; 2]> {
    let bound = aux.code_bound()?;
    if code >= bound {
        return Err(Error::corrupt(format!("code {code} is not below bound {bound}")));
    }
    let (m, theta) = split_code(code, aux.codebook_size);
    let c = cb.point(theta);
    if m == 0 {
        return Ok(c);
    }
    let s = scale_factor(m, aux.categories, aux.box_len, aux.stats.farthest)
        .map_err(|e| Error::corrupt(format!("code {code}: {e}")))?;
    let o = aux.stats.centroid;
    Ok([unshrink(c[0], o[0], s), unshrink(c[1], o[1], s)])
}

/// Precomputed `f32` reconstructions for every code.
///
/// A grid codebook separates by axis, so the table holds `(M + 1) * V`
/// values per axis; a trajectory codebook stores all `(M + 1) * U` pairs.
/// Entries equal `decode_pair` rounded to `f32`.
#[derive(Debug, Clone)]
pub struct DecodeTable {
    codebook_size: u32,
    limit: u32,
    layout: TableLayout,
}

#[derive(Debug, Clone)]
enum TableLayout {
    Grid { side: u32, xs: Vec<f32>, ys: Vec<f32> },
    Full { pairs: Vec<[f32; 2]> },
}

impl DecodeTable {
    pub fn new(aux: &AuxParams, cb: &Codebook) -> Result<Self> {
        let bound = aux.code_bound()?;
        let o = aux.stats.centroid;
        // Categories whose scale is undefined form a suffix; codes there are rejected.
        let mut scales = Vec::with_capacity(aux.categories as usize + 1);
        for m in 0..=aux.categories {
            match scale_factor(m, aux.categories, aux.box_len, aux.stats.farthest) {
                Ok(s) => scales.push(s),
                Err(_) => break,
            }
        }
        let limit = (scales.len() as u32 * aux.codebook_size).min(bound);
        let layout = match cb.grid_axes() {
            Some((ax, ay)) => {
                let axis = |coords: &[f64], center: f64| -> Vec<f32> {
                    scales
                        .iter()
                        .enumerate()
                        .flat_map(|(m, &s)| {
                            coords.iter().map(move |&v| if m == 0 { v as f32 } else { unshrink(v, center, s) as f32 })
                        })
                        .collect()
                };
                TableLayout::Grid { side: ax.len() as u32, xs: axis(ax, o[0]), ys: axis(ay, o[1]) }
            }
            None => {
                let pairs = scales
                    .iter()
                    .enumerate()
                    .flat_map(|(m, &s)| {
                        cb.points().iter().map(move |c| {
                            if m == 0 {
                                [c[0] as f32, c[1] as f32]
                            } else {
                                [unshrink(c[0], o[0], s) as f32, unshrink(c[1], o[1], s) as f32]
                            }
                        })
                    })
                    .collect();
                TableLayout::Full { pairs }
            }
        };
        Ok(Self { codebook_size: aux.codebook_size, limit, layout })
    }

    /// Codes at or above this value cannot be decoded.
    #[inline]
    pub fn limit(&self) -> u32 {
        self.limit
    }

    /// Heap bytes held by the table.
    pub fn heap_bytes(&self) -> usize {
        match &self.layout {
            TableLayout::Grid { xs, ys, .. } => (xs.len() + ys.len()) * 4,
            TableLayout::Full { pairs } => pairs.len() * 8,
        }
    }

    #[inline]
    pub fn get(&self, code: u32) -> Result<[f32; 2]> {
        if code >= self.limit {
            return Err(Error::corrupt(format!("code {code} is not below decodable limit {}", self.limit)));
        }
        Ok(self.lookup(code))
    }

    /// Unchecked-range lookup; the caller guarantees `code < limit()`.
    #[inline]
    pub fn lookup(&self, code: u32) -> [f32; 2] {
        match &self.layout {
            TableLayout::Grid { side, xs, ys } => {
                let m = code / self.codebook_size;
                let theta = code - m * self.codebook_size;
                let row = theta / side;
                let col = theta - row * side;
                let base = (m * side) as usize;
                [xs[base + col as usize], ys[base + row as usize]]
            }
            TableLayout::Full { pairs } => pairs[code as usize],
        }
    }
}

/// Encodes a paired field; rows are processed in parallel.
pub fn encode_field(pf: &PairField, aux: &AuxParams, cb: &Codebook) -> Result<CodeMatrix> {
    let per_row = pf.pairs_per_row();
    let mut codes = vec![0u32; pf.len()];
    codes
        .par_chunks_mut(per_row)
        .enumerate()
        .try_for_each(|(k, out)| -> Result<()> {
            for (slot, p) in out.iter_mut().zip(pf.row(k).chunks_exact(2)) {
                *slot = encode_pair([p[0] as f64, p[1] as f64], aux, cb)?;
            }
            Ok(())
        })?;
    CodeMatrix::new(pf.rows(), per_row, aux.code_bound()?, codes)
}

/// Encodes `w` against precomputed parameters.
pub fn encode_tensor(w: &Matrix, aux: &AuxParams) -> Result<CodeMatrix> {
    let pf = pair_split(w)?;
    let cb = build_codebook(aux)?;
    encode_field(&pf, aux, &cb)
}

/// Reconstructs a `rows x cols` matrix from its codes, dropping the pad column.
pub fn decode_tensor(cm: &CodeMatrix, aux: &AuxParams, shape: (usize, usize)) -> Result<Matrix> {
    let cb = build_codebook(aux)?;
    let table = DecodeTable::new(aux, &cb)?;
    decode_with_table(cm, aux, &table, shape)
}

pub(crate) fn check_layout(cm: &CodeMatrix, aux: &AuxParams, shape: (usize, usize)) -> Result<()> {
    let (rows, cols) = shape;
    if rows == 0 || cols == 0 {
        return Err(Error::shape(format!("cannot decode into {rows}x{cols}")));
    }
    if cm.rows() != rows || cm.pair_cols() != cols.div_ceil(2) {
        return Err(Error::corrupt(format!(
            "{}x{} codes do not describe a {rows}x{cols} matrix",
            cm.rows(),
            cm.pair_cols()
        )));
    }
    if cm.bound() != aux.code_bound()? {
        return Err(Error::corrupt(format!(
            "code bound {} disagrees with parameters ({})",
            cm.bound(),
            aux.code_bound()?
        )));
    }
    Ok(())
}

pub(crate) fn decode_with_table(cm: &CodeMatrix, aux: &AuxParams, table: &DecodeTable, shape: (usize, usize)) -> Result<Matrix> {
    check_layout(cm, aux, shape)?;
    let (rows, cols) = shape;
    let per_row = cm.pair_cols();
    let mut out = vec![0.0f32; rows * cols];
    out.par_chunks_mut(cols)
        .zip(cm.codes().par_chunks(per_row))
        .try_for_each(|(dst, codes)| -> Result<()> {
            for (j, &code) in codes.iter().enumerate() {
                let [x, y] = table.get(code)?;
                dst[2 * j] = x;
                if 2 * j + 1 < cols {
                    dst[2 * j + 1] = y;
                }
            }
            Ok(())
        })?;
    Matrix::new(rows, cols, out)
}

/// Mean absolute difference over the original (unpadded) entries.
pub fn mae(w: &Matrix, w_hat: &Matrix) -> Result<f64> {
    if w.shape() != w_hat.shape() {
        return Err(Error::shape(format!("{:?} vs {:?}", w.shape(), w_hat.shape())));
    }
    if w.as_slice().is_empty() {
        return Err(Error::shape("mean of an empty matrix"));
    }
    let sum: f64 = w
        .as_slice()
        .iter()
        .zip(w_hat.as_slice())
        .map(|(&a, &b)| (a as f64 - b as f64).abs())
        .sum();
    Ok(sum / w.as_slice().len() as f64)
}

/// Largest absolute entry-wise difference.
pub fn max_abs_error(w: &Matrix, w_hat: &Matrix) -> Result<f64> {
    if w.shape() != w_hat.shape() {
        return Err(Error::shape(format!("{:?} vs {:?}", w.shape(), w_hat.shape())));
    }
    Ok(w.as_slice()
        .iter()
        .zip(w_hat.as_slice())
        .map(|(&a, &b)| (a as f64 - b as f64).abs())
        .fold(0.0, f64::max))
}

/// Computes statistics, builds parameters and encodes `w` in one step.
pub fn compress_matrix(w: &Matrix, box_len: f64, codebook_size: u32, categories: u32, kind: CodebookKind) -> Result<(CodeMatrix, AuxParams)> {
    let pf = pair_split(w)?;
    let stats = compute_stats(&pf)?;
    let aux = AuxParams::new(box_len, codebook_size, categories, stats, kind)?;
    let cb = build_codebook(&aux)?;
    Ok((encode_field(&pf, &aux, &cb)?, aux))
}
