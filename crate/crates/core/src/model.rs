//! Whole-checkpoint compression: safetensors in, container out, with
//! per-tensor reports.

use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::codec::{mae, max_abs_error};
use crate::container::{
    Container, Dtype, EligibilityPolicy, EntryKind, RawTensor, TensorEntry, TensorMap, Totals,
};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::search::{grid_search, SearchSpace};

#[derive(Debug, Clone)]
pub struct CompressOptions {
    pub space: SearchSpace,
    pub policy: EligibilityPolicy,
    pub mae_budget: Option<f64>,
}

impl CompressOptions {
    pub fn new(space: SearchSpace) -> Self {
        Self { space, policy: EligibilityPolicy::default(), mae_budget: None }
    }
}

/// Parameters picked for a compressed tensor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Chosen {
    pub l: f64,
    #[serde(rename = "U")]
    pub codebook_size: u32,
    #[serde(rename = "M")]
    pub categories: u32,
    pub bit_width: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TensorReport {
    pub name: String,
    pub kind: EntryKind,
    pub shape: Vec<usize>,
    pub dtype: Dtype,
    /// Mean absolute error of the values as they are emitted on decompress.
    pub mae: Option<f64>,
    pub max_abs_error: Option<f64>,
    pub bits_per_param: f64,
    pub original_bytes: u64,
    pub stored_bytes: u64,
    pub ratio: f64,
    pub params: Option<Chosen>,
    pub seconds: f64,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelReport {
    pub tensors: Vec<TensorReport>,
    pub totals: Totals,
    pub compressed_tensors: usize,
    pub seconds: f64,
    pub mae_budget: Option<f64>,
    pub budget_violations: Vec<String>,
}

impl ModelReport {
    pub fn within_budget(&self) -> bool {
        self.budget_violations.is_empty()
    }

    fn finish(mut tensors: Vec<TensorReport>, totals: Totals, seconds: f64, mae_budget: Option<f64>) -> Self {
        tensors.sort_by(|a, b| a.name.cmp(&b.name));
        let budget_violations = match mae_budget {
            Some(b) => tensors.iter().filter(|t| t.mae.is_some_and(|m| m > b)).map(|t| t.name.clone()).collect(),
            None => Vec::new(),
        };
        let compressed_tensors = tensors.iter().filter(|t| t.kind == EntryKind::Compressed).count();
        Self { tensors, totals, compressed_tensors, seconds, mae_budget, budget_violations }
    }
}

#[derive(Debug, Clone)]
pub struct Compressed {
    pub container: Container,
    /// Serialized container, ready to be written.
    pub bytes: Vec<u8>,
    pub report: ModelReport,
}

/// Compresses every eligible tensor of `model`.
///
/// Tensors are processed in parallel. A tensor for which no candidate
/// succeeds is stored unchanged and the reason is kept in its report.
pub fn compress_model(model: &TensorMap, opts: &CompressOptions) -> Result<Compressed> {
    opts.space.validate()?;
    let start = Instant::now();
    let work: Vec<_> = model.tensors.iter().collect();
    let results: Vec<(TensorEntry, TensorReport)> = work
        .par_iter()
        .map(|(name, t)| compress_tensor(name, t, opts))
        .collect::<Result<_>>()?;
    let (entries, reports): (Vec<_>, Vec<_>) = results.into_iter().unzip();

    let mut container = Container::new(entries);
    container.metadata = model.metadata.clone();
    let (bytes, manifest) = container.to_bytes()?;
    let report = ModelReport::finish(reports, manifest.totals, start.elapsed().as_secs_f64(), opts.mae_budget);
    Ok(Compressed { container, bytes, report })
}

fn compress_tensor(name: &str, t: &RawTensor, opts: &CompressOptions) -> Result<(TensorEntry, TensorReport)> {
    let start = Instant::now();
    if let Some(reason) = opts.policy.reason_to_skip(name, t) {
        let entry = TensorEntry::pass_through(name, t.clone());
        return Ok((entry.clone(), pass_report(&entry, start, Some(reason))));
    }
    let values = t.to_f32().ok_or_else(|| Error::param(format!("'{name}' has no float view")))?;
    let (rows, cols) = (t.shape[0], t.shape[1]);
    let w = Matrix::new(rows, cols, values)?;
    let found = match grid_search(&w, &opts.space) {
        Ok(r) => r,
        Err(e @ (Error::Search(_) | Error::NonFinite { .. })) => {
            let entry = TensorEntry::pass_through(name, t.clone());
            return Ok((entry.clone(), pass_report(&entry, start, Some(format!("kept uncompressed: {e}")))));
        }
        Err(e) => return Err(e),
    };
    let entry = TensorEntry::compressed(name, t.dtype.clone(), (rows, cols), &found.codes, found.aux)?;
    let emitted = emitted_matrix(&entry)?;
    let report = TensorReport {
        name: name.to_string(),
        kind: EntryKind::Compressed,
        shape: t.shape.clone(),
        dtype: t.dtype.clone(),
        mae: Some(mae(&w, &emitted)?),
        max_abs_error: Some(max_abs_error(&w, &emitted)?),
        bits_per_param: entry.bits_per_param(),
        original_bytes: entry.original_bytes() as u64,
        stored_bytes: entry.payload_bytes() as u64,
        ratio: entry.original_bytes() as f64 / entry.payload_bytes() as f64,
        params: Some(Chosen {
            l: found.aux.box_len,
            codebook_size: found.aux.codebook_size,
            categories: found.aux.categories,
            bit_width: found.aux.bit_width()?,
        }),
        seconds: start.elapsed().as_secs_f64(),
        note: None,
    };
    Ok((entry, report))
}

/// Decoded values after rounding to the entry's dtype, exactly as a
/// decompressed checkpoint will hold them.
fn emitted_matrix(entry: &TensorEntry) -> Result<Matrix> {
    let raw = entry.to_raw()?;
    let values = raw.to_f32().ok_or_else(|| Error::param(format!("'{}' has no float view", entry.name)))?;
    Matrix::new(entry.shape[0], entry.shape[1], values)
}

fn pass_report(entry: &TensorEntry, start: Instant, note: Option<String>) -> TensorReport {
    let bytes = entry.payload_bytes() as u64;
    TensorReport {
        name: entry.name.clone(),
        kind: EntryKind::PassThrough,
        shape: entry.shape.clone(),
        dtype: entry.dtype.clone(),
        mae: None,
        max_abs_error: None,
        bits_per_param: entry.bits_per_param(),
        original_bytes: bytes,
        stored_bytes: bytes,
        ratio: 1.0,
        params: None,
        seconds: start.elapsed().as_secs_f64(),
        note,
    }
}

/// Rebuilds a checkpoint with original names, shapes and dtypes.
pub fn decompress_model(container: &Container) -> Result<TensorMap> {
    let tensors = container
        .entries
        .par_iter()
        .map(|e| Ok((e.name.clone(), e.to_raw()?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(TensorMap { tensors: tensors.into_iter().collect(), metadata: container.metadata.clone() })
}

/// Compares a container against the checkpoint it was made from.
pub fn verify_model(original: &TensorMap, container: &Container, totals: Totals, mae_budget: Option<f64>) -> Result<ModelReport> {
    let start = Instant::now();
    if original.tensors.len() != container.entries.len() {
        return Err(Error::shape(format!(
            "checkpoint has {} tensors, container has {}",
            original.tensors.len(),
            container.entries.len()
        )));
    }
    let reports = container
        .entries
        .par_iter()
        .map(|entry| {
            let t0 = Instant::now();
            let orig = original
                .tensors
                .get(&entry.name)
                .ok_or_else(|| Error::shape(format!("'{}' is not in the checkpoint", entry.name)))?;
            if orig.shape != entry.shape || orig.dtype != entry.dtype {
                return Err(Error::shape(format!(
                    "'{}': checkpoint {:?} {} vs container {:?} {}",
                    entry.name, orig.shape, orig.dtype, entry.shape, entry.dtype
                )));
            }
            match entry.kind() {
                EntryKind::PassThrough => {
                    if entry.payload.as_bytes() != orig.data.as_slice() {
                        return Err(Error::corrupt(format!("'{}': stored bytes differ from checkpoint", entry.name)));
                    }
                    Ok(pass_report(entry, t0, None))
                }
                EntryKind::Compressed => {
                    let w = Matrix::new(orig.shape[0], orig.shape[1], orig.to_f32().unwrap_or_default())?;
                    let emitted = emitted_matrix(entry)?;
                    let aux = entry.aux.expect("compressed entries carry parameters");
                    Ok(TensorReport {
                        name: entry.name.clone(),
                        kind: EntryKind::Compressed,
                        shape: entry.shape.clone(),
                        dtype: entry.dtype.clone(),
                        mae: Some(mae(&w, &emitted)?),
                        max_abs_error: Some(max_abs_error(&w, &emitted)?),
                        bits_per_param: entry.bits_per_param(),
                        original_bytes: entry.original_bytes() as u64,
                        stored_bytes: entry.payload_bytes() as u64,
                        ratio: entry.original_bytes() as f64 / entry.payload_bytes() as f64,
                        params: Some(Chosen {
                            l: aux.box_len,
                            codebook_size: aux.codebook_size,
                            categories: aux.categories,
                            bit_width: aux.bit_width()?,
                        }),
                        seconds: t0.elapsed().as_secs_f64(),
                        note: None,
                    })
                }
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ModelReport::finish(reports, totals, start.elapsed().as_secs_f64(), mae_budget))
}
