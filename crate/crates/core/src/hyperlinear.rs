//! Blocked matrix multiplication against compressed weights.
//!
//! `C = A * W` where `W` is only available as codes. The output is cut into
//! `R x S` blocks; for each block the reduction walks `T`-row slabs in
//! ascending order, decoding one `T x S` weight tile at a time into a
//! scratch buffer and accumulating into an `R x S` accumulator. A code
//! yields both weights of its pair from a single fetch. No buffer larger
//! than `T x S + R x S` values is allocated per worker, whatever the
//! weight shape.
//!
//! Output blocks are independent and processed in parallel on the current
//! rayon pool. Each output element accumulates its products in ascending
//! `k` order, so the result is bit-identical for any worker count and
//! equal to [`reference_gemm`] applied to the decoded weights.

use std::ops::Range;

use rayon::prelude::*;

use crate::codec::{build_codebook, decode_with_table, AuxParams, CodeMatrix, DecodeTable};
use crate::container::{PackedPayload, Payload, TensorEntry};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Block sizes: `rows` (R) of output, `cols` (S, even) of output,
/// `depth` (T) along the reduction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockConfig {
    pub rows: usize,
    pub cols: usize,
    pub depth: usize,
}

impl Default for BlockConfig {
    fn default() -> Self {
        Self { rows: 64, cols: 64, depth: 64 }
    }
}

impl BlockConfig {
    pub fn new(rows: usize, cols: usize, depth: usize) -> Result<Self> {
        let cfg = Self { rows, cols, depth };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 || self.depth == 0 {
            return Err(Error::param(format!("block sizes must be positive: {self:?}")));
        }
        if self.cols % 2 != 0 {
            return Err(Error::param(format!("output block width {} must be even", self.cols)));
        }
        Ok(())
    }

    /// Bytes of scratch one worker holds: a weight tile plus an accumulator.
    pub fn scratch_bytes(&self) -> usize {
        (self.depth * self.cols + self.rows * self.cols) * std::mem::size_of::<f32>()
    }
}

#[derive(Debug, Clone)]
enum CodeSource {
    Unpacked(Vec<u32>),
    Packed(PackedPayload),
}

/// Compressed weights ready for [`fused_gemm`].
#[derive(Debug, Clone)]
pub struct FusedOperand {
    source: CodeSource,
    aux: AuxParams,
    rows: usize,
    cols: usize,
    pair_cols: usize,
    table: DecodeTable,
}

impl FusedOperand {
    /// Wraps unpacked codes for a `rows x cols` weight.
    pub fn new(codes: CodeMatrix, aux: AuxParams, shape: (usize, usize)) -> Result<Self> {
        crate::codec::check_layout(&codes, &aux, shape)?;
        let pair_cols = codes.pair_cols();
        Self::build(CodeSource::Unpacked(codes.into_codes()), aux, shape, pair_cols)
    }

    /// Reads codes straight out of a bit-packed payload.
    pub fn from_packed(payload: PackedPayload, aux: AuxParams, shape: (usize, usize)) -> Result<Self> {
        let pair_cols = shape.1.div_ceil(2);
        if payload.code_count() != shape.0 * pair_cols {
            return Err(Error::corrupt(format!(
                "{} packed codes do not describe a {}x{} weight",
                payload.code_count(),
                shape.0,
                shape.1
            )));
        }
        if payload.bit_width() != aux.bit_width()? {
            return Err(Error::corrupt("payload bit width disagrees with parameters"));
        }
        Self::build(CodeSource::Packed(payload), aux, shape, pair_cols)
    }

    /// Operand for a compressed container entry, keeping its codes packed.
    pub fn from_entry(entry: &TensorEntry) -> Result<Self> {
        match (&entry.payload, entry.aux, &entry.shape[..]) {
            (Payload::Packed(p), Some(aux), &[r, c]) => Self::from_packed(p.clone(), aux, (r, c)),
            _ => Err(Error::param(format!("entry '{}' is not a compressed matrix", entry.name))),
        }
    }

    fn build(source: CodeSource, aux: AuxParams, shape: (usize, usize), pair_cols: usize) -> Result<Self> {
        if shape.0 == 0 || shape.1 == 0 {
            return Err(Error::shape("empty weight"));
        }
        let cb = build_codebook(&aux)?;
        let table = DecodeTable::new(&aux, &cb)?;
        Ok(Self { source, aux, rows: shape.0, cols: shape.1, pair_cols, table })
    }

    /// Logical weight shape `(K, N)`.
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn aux(&self) -> &AuxParams {
        &self.aux
    }

    pub fn table(&self) -> &DecodeTable {
        &self.table
    }

    /// Fully decoded weight, for reference paths.
    pub fn decode_all(&self) -> Result<Matrix> {
        let codes = match &self.source {
            CodeSource::Unpacked(c) => c.clone(),
            CodeSource::Packed(p) => crate::container::unpack_codes(p)?,
        };
        let cm = CodeMatrix::new(self.rows, self.pair_cols, self.aux.code_bound()?, codes)?;
        decode_with_table(&cm, &self.aux, &self.table, self.shape())
    }

    /// Writes pairs `pairs` of weight rows `rows` into `tile`, row stride
    /// `2 * pairs.len()`.
    fn fill_tile(&self, rows: Range<usize>, pairs: Range<usize>, tile: &mut [f32]) -> Result<()> {
        match &self.source {
            CodeSource::Unpacked(codes) => self.fill_with(rows, pairs, tile, |i| codes[i]),
            CodeSource::Packed(p) => self.fill_with(rows, pairs, tile, |i| p.get(i)),
        }
    }

    #[inline(always)]
    fn fill_with(&self, rows: Range<usize>, pairs: Range<usize>, tile: &mut [f32], code_at: impl Fn(usize) -> u32) -> Result<()> {
        let width = 2 * pairs.len();
        let limit = self.table.limit();
        for (t, k) in rows.enumerate() {
            let base = k * self.pair_cols;
            let dst = &mut tile[t * width..(t + 1) * width];
            for (slot, j) in dst.chunks_exact_mut(2).zip(pairs.clone()) {
                let code = code_at(base + j);
                if code >= limit {
                    return Err(Error::corrupt(format!("code {code} at ({k}, {j}) is not below {limit}")));
                }
                let [x, y] = self.table.lookup(code);
                slot[0] = x;
                slot[1] = y;
            }
        }
        Ok(())
    }
}

/// Decodes the weight tile `W[k_range, j_range]`.
///
/// `j_range` is in weight columns and must start on a pair boundary.
pub fn decode_block(op: &FusedOperand, k_range: Range<usize>, j_range: Range<usize>) -> Result<Matrix> {
    if k_range.start > k_range.end || k_range.end > op.rows {
        return Err(Error::shape(format!("row range {k_range:?} outside 0..{}", op.rows)));
    }
    if j_range.start > j_range.end || j_range.end > op.cols || j_range.start % 2 != 0 {
        return Err(Error::shape(format!("column range {j_range:?} invalid for width {}", op.cols)));
    }
    let pairs = j_range.start / 2..j_range.end.div_ceil(2);
    let width = 2 * pairs.len();
    let mut tile = vec![0.0f32; k_range.len() * width];
    op.fill_tile(k_range.clone(), pairs, &mut tile)?;
    let cols = j_range.len();
    Matrix::new(
        k_range.len(),
        cols,
        tile.chunks_exact(width.max(1)).take(k_range.len()).flat_map(|r| r[..cols].iter().copied()).collect(),
    )
}

/// Source of `T x S` weight tiles for the blocked kernel.
trait TileSource: Sync {
    fn fill(&self, rows: Range<usize>, cols: Range<usize>, tile: &mut [f32]) -> Result<()>;
}

impl TileSource for FusedOperand {
    #[inline]
    fn fill(&self, rows: Range<usize>, cols: Range<usize>, tile: &mut [f32]) -> Result<()> {
        self.fill_tile(rows, cols.start / 2..cols.end / 2, tile)
    }
}

struct DenseTiles<'a>(&'a Matrix);

impl TileSource for DenseTiles<'_> {
    #[inline]
    fn fill(&self, rows: Range<usize>, cols: Range<usize>, tile: &mut [f32]) -> Result<()> {
        let width = cols.len();
        for (t, k) in rows.enumerate() {
            tile[t * width..(t + 1) * width].copy_from_slice(&self.0.row(k)[cols.clone()]);
        }
        Ok(())
    }
}

/// Shared blocked driver. `src_cols` is the padded weight width; only the
/// first `out_cols` columns reach the output.
fn blocked<S: TileSource>(a: &Matrix, src: &S, depth: usize, src_cols: usize, out_cols: usize, cfg: &BlockConfig) -> Result<Matrix> {
    cfg.validate()?;
    let (m, k) = a.shape();
    if k != depth {
        return Err(Error::shape(format!("A is {m}x{k} but W has {depth} rows")));
    }
    let mut c = Matrix::zeros(m, out_cols);
    if m == 0 || out_cols == 0 {
        return Ok(c);
    }
    let chunk = cfg.rows * out_cols;
    c.as_mut_slice().par_chunks_mut(chunk).enumerate().try_for_each_init(
        || (vec![0.0f32; cfg.depth * cfg.cols], vec![0.0f32; cfg.rows * cfg.cols]),
        |(tile, acc), (ib, out)| -> Result<()> {
            let r0 = ib * cfg.rows;
            let rows = out.len() / out_cols;
            for j0 in (0..src_cols).step_by(cfg.cols) {
                let w = cfg.cols.min(src_cols - j0);
                let acc = &mut acc[..rows * w];
                acc.fill(0.0);
                for k0 in (0..k).step_by(cfg.depth) {
                    let t = cfg.depth.min(k - k0);
                    let tile = &mut tile[..t * w];
                    src.fill(k0..k0 + t, j0..j0 + w, tile)?;
                    for r in 0..rows {
                        let a_row = &a.row(r0 + r)[k0..k0 + t];
                        let acc_row = &mut acc[r * w..(r + 1) * w];
                        for (tile_row, &av) in tile.chunks_exact(w).zip(a_row) {
                            for (cv, &wv) in acc_row.iter_mut().zip(tile_row) {
                                *cv += av * wv;
                            }
                        }
                    }
                }
                let keep = w.min(out_cols - j0);
                for r in 0..rows {
                    out[r * out_cols + j0..r * out_cols + j0 + keep].copy_from_slice(&acc[r * w..r * w + keep]);
                }
            }
            Ok(())
        },
    )?;
    Ok(c)
}

/// `A * W` with `W` decoded tile by tile from `op`.
pub fn fused_gemm(a: &Matrix, op: &FusedOperand, cfg: &BlockConfig) -> Result<Matrix> {
    blocked(a, op, op.rows, 2 * op.pair_cols, op.cols, cfg)
}

/// Dense blocked GEMM with the same blocking and summation order as
/// [`fused_gemm`].
pub fn blocked_gemm(a: &Matrix, w: &Matrix, cfg: &BlockConfig) -> Result<Matrix> {
    let cfg = BlockConfig { cols: cfg.cols, ..*cfg };
    // Dense tiles need no pair alignment, but keep the caller's even width.
    blocked(a, &DenseTiles(w), w.rows(), w.cols(), w.cols(), &cfg)
}

/// Naive triple loop, summing each output element in ascending `k`.
pub fn reference_gemm(a: &Matrix, w: &Matrix) -> Result<Matrix> {
    let (m, k) = a.shape();
    let (k2, n) = w.shape();
    if k != k2 {
        return Err(Error::shape(format!("A is {m}x{k} but W is {k2}x{n}")));
    }
    let mut c = Matrix::zeros(m, n);
    for i in 0..m {
        for j in 0..n {
            let mut s = 0.0f32;
            for kk in 0..k {
                s += a.get(i, kk) * w.get(kk, j);
            }
            c.set(i, j, s);
        }
    }
    Ok(c)
}

/// Runs `f` on a dedicated pool of `workers` threads.
pub fn with_workers<R: Send>(workers: usize, f: impl FnOnce() -> R + Send) -> Result<R> {
    if workers == 0 {
        return Err(Error::param("worker count must be at least 1"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::param(format!("cannot start {workers} workers: {e}")))?;
    Ok(pool.install(f))
}
