use serde::{Deserialize, Serialize};

use super::stats::BoxStats;
use crate::error::{Error, Result};

/// How codewords are laid out inside the box.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CodebookKind {
    /// `V x V` cell-centred lattice, `V = ceil(sqrt(U))`.
    #[default]
    GridLattice,
    /// Wrapped straight-line trajectory `theta * step * a (mod l)`.
    LiteralTrajectory,
}

/// Everything needed to decode a tensor's codes: the per-tensor sidecar.
///
/// Serializes to a compact record (`l`, `U`, `M`, centroid `c`, farthest
/// distance `lf`, `kind`, and `step` only when it differs from the default)
/// and is validated on deserialization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "AuxRecord", try_from = "AuxRecord")]
pub struct AuxParams {
    /// Side length `l` of the square box.
    pub box_len: f64,
    /// Effective codebook size `U`; codeword indices are `0..U`.
    pub codebook_size: u32,
    /// Number of outlier categories `M`.
    pub categories: u32,
    pub stats: BoxStats,
    pub kind: CodebookKind,
    /// Trajectory step; only read by [`CodebookKind::LiteralTrajectory`].
    pub step: f64,
}

impl AuxParams {
    /// Builds validated parameters. For a grid codebook the requested size is
    /// rounded up to the next perfect square.
    pub fn new(box_len: f64, requested_size: u32, categories: u32, stats: BoxStats, kind: CodebookKind) -> Result<Self> {
        if requested_size < 2 {
            return Err(Error::param(format!("codebook size must be at least 2, got {requested_size}")));
        }
        let codebook_size = match kind {
            CodebookKind::GridLattice => {
                let side = grid_side(requested_size);
                side.checked_mul(side).ok_or_else(|| Error::param("codebook size overflows u32"))?
            }
            CodebookKind::LiteralTrajectory => requested_size,
        };
        let aux = Self {
            box_len,
            codebook_size,
            categories,
            stats,
            kind,
            step: default_step(box_len, codebook_size),
        };
        aux.validate()?;
        Ok(aux)
    }

    /// Replaces the trajectory step.
    pub fn with_step(mut self, step: f64) -> Result<Self> {
        self.step = step;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = self.box_len.is_finite()
            && self.step.is_finite()
            && self.stats.farthest.is_finite()
            && self.stats.centroid.iter().all(|c| c.is_finite());
        if !finite {
            return Err(Error::param("auxiliary parameters must be finite"));
        }
        if !(self.box_len > 0.0) {
            return Err(Error::param(format!("box length must be positive, got {}", self.box_len)));
        }
        if !(self.step > 0.0) {
            return Err(Error::param(format!("trajectory step must be positive, got {}", self.step)));
        }
        if self.stats.farthest < 0.0 {
            return Err(Error::param("farthest distance is negative"));
        }
        if self.codebook_size < 2 {
            return Err(Error::param(format!("codebook size must be at least 2, got {}", self.codebook_size)));
        }
        if self.categories < 1 {
            return Err(Error::param("category count must be at least 1"));
        }
        if self.kind == CodebookKind::GridLattice {
            let side = grid_side(self.codebook_size);
            if side * side != self.codebook_size {
                return Err(Error::param(format!("grid codebook size {} is not a perfect square", self.codebook_size)));
            }
        }
        self.code_bound()?;
        Ok(())
    }

    /// Exclusive upper bound on stored codes, `(M + 1) * U`.
    pub fn code_bound(&self) -> Result<u32> {
        (self.categories as u64 + 1)
            .checked_mul(self.codebook_size as u64)
            .and_then(|b| u32::try_from(b).ok())
            .ok_or_else(|| Error::param("(M + 1) * U does not fit in 32 bits"))
    }

    /// Bits needed per stored code.
    pub fn bit_width(&self) -> Result<u32> {
        Ok(bits_for_bound(self.code_bound()?))
    }

    /// Grid side `V`.
    pub fn grid_side(&self) -> u32 {
        grid_side(self.codebook_size)
    }

    /// Lower-left corner of the box.
    pub fn box_min(&self) -> [f64; 2] {
        let h = self.box_len / 2.0;
        [self.stats.centroid[0] - h, self.stats.centroid[1] - h]
    }
}

/// `ceil(sqrt(u))` computed exactly in integers.
pub fn grid_side(u: u32) -> u32 {
    let mut v = (u as f64).sqrt() as u32;
    while (v as u64) * (v as u64) < u as u64 {
        v += 1;
    }
    while v > 0 && ((v - 1) as u64) * ((v - 1) as u64) >= u as u64 {
        v -= 1;
    }
    v
}

/// Smallest `b` with `bound <= 2^b` (at least 1).
pub fn bits_for_bound(bound: u32) -> u32 {
    if bound <= 2 {
        1
    } else {
        32 - (bound - 1).leading_zeros()
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AuxRecord {
    l: f64,
    #[serde(rename = "U")]
    u: u32,
    #[serde(rename = "M")]
    m: u32,
    c: [f64; 2],
    lf: f64,
    kind: CodebookKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    step: Option<f64>,
}

impl From<AuxParams> for AuxRecord {
    fn from(a: AuxParams) -> Self {
        let implied = default_step(a.box_len, a.codebook_size);
        Self {
            l: a.box_len,
            u: a.codebook_size,
            m: a.categories,
            c: a.stats.centroid,
            lf: a.stats.farthest,
            kind: a.kind,
            step: (a.step.to_bits() != implied.to_bits()).then_some(a.step),
        }
    }
}

impl TryFrom<AuxRecord> for AuxParams {
    type Error = Error;

    fn try_from(r: AuxRecord) -> Result<Self> {
        let aux = AuxParams {
            box_len: r.l,
            codebook_size: r.u,
            categories: r.m,
            stats: BoxStats { centroid: r.c, farthest: r.lf },
            kind: r.kind,
            step: r.step.unwrap_or_else(|| default_step(r.l, r.u)),
        };
        aux.validate()?;
        Ok(aux)
    }
}

/// Step making the first trajectory coordinate advance by `l / U` per index.
pub fn default_step(box_len: f64, codebook_size: u32) -> f64 {
    let dx = box_len / codebook_size as f64;
    (dx * dx + box_len * box_len).sqrt()
}
