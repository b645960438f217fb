//! Per-tensor hyperparameter search.
//!
//! Every `(M, U, l)` triple is tried against the same pair statistics and
//! the one with the lowest reconstruction MAE wins. Equal-MAE candidates
//! resolve toward fewer bits: smaller `U`, then smaller `M`, then larger `l`.

mod presets;

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codec::{
    build_codebook, compute_stats, decode_tensor, encode_field, encode_tensor, mae, pair_split, AuxParams, BoxStats,
    CodeMatrix, CodebookKind, PairField,
};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub use presets::{builtin_presets, find_preset, parse_presets, Preset, PresetRegistry};

/// Candidate lists for the three hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    #[serde(rename = "l")]
    pub box_lens: Vec<f64>,
    #[serde(rename = "U")]
    pub codebook_sizes: Vec<u32>,
    #[serde(rename = "M")]
    pub categories: Vec<u32>,
    #[serde(default)]
    pub kind: CodebookKind,
}

/// One `(l, U, M)` triple.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    #[serde(rename = "l")]
    pub box_len: f64,
    #[serde(rename = "U")]
    pub codebook_size: u32,
    #[serde(rename = "M")]
    pub categories: u32,
}

impl SearchSpace {
    pub fn new(box_lens: Vec<f64>, codebook_sizes: Vec<u32>, categories: Vec<u32>) -> Result<Self> {
        let space = Self { box_lens, codebook_sizes, categories, kind: CodebookKind::GridLattice };
        space.validate()?;
        Ok(space)
    }

    pub fn with_kind(mut self, kind: CodebookKind) -> Self {
        self.kind = kind;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.box_lens.is_empty() || self.codebook_sizes.is_empty() || self.categories.is_empty() {
            return Err(Error::param("every candidate list must be non-empty"));
        }
        if let Some(l) = self.box_lens.iter().find(|l| !(l.is_finite() && **l > 0.0)) {
            return Err(Error::param(format!("box length candidate {l} must be positive and finite")));
        }
        if let Some(u) = self.codebook_sizes.iter().find(|&&u| u < 2) {
            return Err(Error::param(format!("codebook size candidate {u} must be at least 2")));
        }
        if self.categories.contains(&0) {
            return Err(Error::param("category count candidates must be at least 1"));
        }
        Ok(())
    }

    /// All triples in nested `M`, `U`, `l` order, duplicates removed.
    pub fn candidates(&self) -> Vec<Candidate> {
        let mut out: Vec<Candidate> = Vec::new();
        for &m in &self.categories {
            for &u in &self.codebook_sizes {
                for &l in &self.box_lens {
                    let c = Candidate { box_len: l, codebook_size: u, categories: m };
                    if !out.contains(&c) {
                        out.push(c);
                    }
                }
            }
        }
        out
    }
}

/// A candidate that could not be evaluated, with the reason.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateFailure {
    pub candidate: Candidate,
    pub reason: String,
}

/// Winning encoding of a tensor.
#[derive(Debug, Clone)]
pub struct SearchResult {
    pub codes: CodeMatrix,
    pub aux: AuxParams,
    pub achieved_mae: f64,
    pub candidates_tried: usize,
    pub failures: Vec<CandidateFailure>,
}

/// Encode, decode and measure MAE for one parameter set.
pub fn evaluate_candidate(w: &Matrix, aux: &AuxParams) -> Result<f64> {
    let codes = encode_tensor(w, aux)?;
    mae(w, &decode_tensor(&codes, aux, w.shape())?)
}

fn evaluate_field(w: &Matrix, pf: &PairField, aux: &AuxParams) -> Result<(f64, CodeMatrix)> {
    let cb = build_codebook(aux)?;
    let codes = encode_field(pf, aux, &cb)?;
    let err = mae(w, &decode_tensor(&codes, aux, w.shape())?)?;
    Ok((err, codes))
}

struct Scored {
    index: usize,
    aux: AuxParams,
    mae: f64,
}

/// Total order used to pick the winner; `Less` means "better".
fn rank(a: &Scored, b: &Scored) -> Ordering {
    a.mae
        .total_cmp(&b.mae)
        .then(a.aux.codebook_size.cmp(&b.aux.codebook_size))
        .then(a.aux.categories.cmp(&b.aux.categories))
        .then(b.aux.box_len.total_cmp(&a.aux.box_len))
        .then(a.index.cmp(&b.index))
}

/// Tries every candidate in `space` and returns the lowest-MAE encoding.
///
/// Candidates are evaluated in parallel; the winner does not depend on
/// evaluation order. Candidates that fail are skipped and listed in
/// [`SearchResult::failures`]. Statistics are computed once per tensor.
pub fn grid_search(w: &Matrix, space: &SearchSpace) -> Result<SearchResult> {
    space.validate()?;
    let pf = pair_split(w)?;
    let stats = compute_stats(&pf)?;
    let candidates = space.candidates();

    let outcomes: Vec<(usize, Result<Scored>)> = candidates
        .par_iter()
        .enumerate()
        .map(|(index, c)| {
            let scored = candidate_aux(c, stats, space.kind)
                .and_then(|aux| evaluate_field(w, &pf, &aux).map(|(mae, _)| Scored { index, aux, mae }));
            (index, scored)
        })
        .collect();

    let mut failures = Vec::new();
    let mut best: Option<Scored> = None;
    for (index, outcome) in outcomes {
        match outcome {
            Ok(s) if s.mae.is_finite() => {
                if best.as_ref().map_or(true, |b| rank(&s, b) == Ordering::Less) {
                    best = Some(s);
                }
            }
            Ok(s) => failures.push(CandidateFailure {
                candidate: candidates[index],
                reason: format!("non-finite MAE {}", s.mae),
            }),
            Err(e) => failures.push(CandidateFailure { candidate: candidates[index], reason: e.to_string() }),
        }
    }
    let best = best.ok_or_else(|| {
        let reasons: Vec<_> = failures.iter().map(|f| f.reason.as_str()).collect();
        Error::Search(format!("all {} candidates failed: {}", candidates.len(), reasons.join("; ")))
    })?;

    // Re-encoding the winner is deterministic, so it reproduces the scored codes.
    let (achieved_mae, codes) = evaluate_field(w, &pf, &best.aux)?;
    debug_assert_eq!(achieved_mae.to_bits(), best.mae.to_bits());
    Ok(SearchResult {
        codes,
        aux: best.aux,
        achieved_mae,
        candidates_tried: candidates.len(),
        failures,
    })
}

fn candidate_aux(c: &Candidate, stats: BoxStats, kind: CodebookKind) -> Result<AuxParams> {
    AuxParams::new(c.box_len, c.codebook_size, c.categories, stats, kind)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::compress_matrix;

    fn gaussian_like(rows: usize, cols: usize, seed: u32) -> Matrix {
        Matrix::from_fn(rows, cols, |r, c| {
            let x = ((r * cols + c) as f32 * 12.9898 + seed as f32 * 78.233).sin() * 43758.547;
            (x.fract() - 0.5) * 0.08
        })
    }

    #[test]
    fn singleton_space_matches_direct_encoding() {
        let w = gaussian_like(16, 18, 1);
        let space = SearchSpace::new(vec![0.1], vec![1600], vec![3]).unwrap();
        let r = grid_search(&w, &space).unwrap();
        let (codes, aux) = compress_matrix(&w, 0.1, 1600, 3, CodebookKind::GridLattice).unwrap();
        assert_eq!(r.codes, codes);
        assert_eq!(r.aux, aux);
        assert_eq!(r.candidates_tried, 1);
        assert_eq!(r.achieved_mae, evaluate_candidate(&w, &aux).unwrap());
    }

    #[test]
    fn evaluate_is_deterministic() {
        let w = gaussian_like(8, 10, 2);
        let (_, aux) = compress_matrix(&w, 0.05, 100, 2, CodebookKind::GridLattice).unwrap();
        assert_eq!(evaluate_candidate(&w, &aux).unwrap(), evaluate_candidate(&w, &aux).unwrap());
    }

    #[test]
    fn ties_prefer_smaller_u_then_m_then_larger_l() {
        // A constant tensor reconstructs with the same error for every M and
        // for U values that round to the same grid; l matters.
        let w = Matrix::new(2, 2, vec![0.0; 4]).unwrap();
        let space = SearchSpace::new(vec![0.1, 0.2], vec![16, 10], vec![3, 1]).unwrap();
        let r = grid_search(&w, &space).unwrap();
        assert_eq!(r.aux.codebook_size, 16);
        assert_eq!(r.aux.categories, 1);
        // centroid sits exactly between four codewords for any l: error l/(2V)
        assert_eq!(r.aux.box_len, 0.1);
    }

    #[test]
    fn empty_lists_rejected() {
        assert!(SearchSpace::new(vec![], vec![16], vec![1]).is_err());
        assert!(SearchSpace::new(vec![0.1], vec![1], vec![1]).is_err());
        assert!(SearchSpace::new(vec![-0.1], vec![16], vec![1]).is_err());
        assert!(SearchSpace::new(vec![0.1], vec![16], vec![0]).is_err());
    }

    #[test]
    fn candidate_order_is_m_then_u_then_l() {
        let s = SearchSpace::new(vec![0.1, 0.2], vec![4], vec![1, 2]).unwrap();
        let c = s.candidates();
        assert_eq!(c.len(), 4);
        assert_eq!((c[0].categories, c[0].box_len), (1, 0.1));
        assert_eq!((c[1].categories, c[1].box_len), (1, 0.2));
        assert_eq!(c[2].categories, 2);
    }

    #[test]
    fn all_failures_is_an_error() {
        let w = Matrix::new(1, 2, vec![0.0, 0.0]).unwrap();
        // (M + 1) * U overflows u32 for every candidate
        let s = SearchSpace::new(vec![0.1], vec![u32::MAX - 1], vec![u32::MAX]).unwrap();
        match grid_search(&w, &s) {
            Err(Error::Search(msg)) => assert!(msg.contains("1 candidates")),
            other => panic!("unexpected {other:?}"),
        }
    }
}
