use regex::Regex;

use super::safetensors::RawTensor;
use super::EntryKind;
use crate::error::{Error, Result};

pub const DEFAULT_MIN_ELEMENTS: usize = 4096;

/// Decides which tensors go through the codec.
///
/// A tensor is compressed when it is 2-D, stored as F32/F16/BF16, has at
/// least `min_elements` entries, matches an include pattern (if any are
/// given) and matches no exclude pattern.
#[derive(Debug, Clone)]
pub struct EligibilityPolicy {
    pub min_elements: usize,
    include: Vec<Regex>,
    exclude: Vec<Regex>,
}

impl Default for EligibilityPolicy {
    fn default() -> Self {
        Self { min_elements: DEFAULT_MIN_ELEMENTS, include: Vec::new(), exclude: Vec::new() }
    }
}

impl EligibilityPolicy {
    pub fn new(min_elements: usize) -> Self {
        Self { min_elements, ..Self::default() }
    }

    pub fn include(mut self, pattern: &str) -> Result<Self> {
        self.include.push(compile(pattern)?);
        Ok(self)
    }

    pub fn exclude(mut self, pattern: &str) -> Result<Self> {
        self.exclude.push(compile(pattern)?);
        Ok(self)
    }

    pub fn classify(&self, name: &str, tensor: &RawTensor) -> EntryKind {
        self.reason_to_skip(name, tensor).map_or(EntryKind::Compressed, |_| EntryKind::PassThrough)
    }

    /// Why a tensor stays uncompressed, `None` when it is eligible.
    pub fn reason_to_skip(&self, name: &str, tensor: &RawTensor) -> Option<String> {
        if tensor.shape.len() != 2 {
            return Some(format!("{}-D tensor", tensor.shape.len()));
        }
        if !tensor.dtype.is_codec_float() {
            return Some(format!("unsupported dtype {}", tensor.dtype));
        }
        let n = tensor.element_count();
        if n < self.min_elements {
            return Some(format!("{n} elements below threshold {}", self.min_elements));
        }
        if !self.include.is_empty() && !self.include.iter().any(|r| r.is_match(name)) {
            return Some("not matched by any include pattern".into());
        }
        if let Some(r) = self.exclude.iter().find(|r| r.is_match(name)) {
            return Some(format!("excluded by pattern '{}'", r.as_str()));
        }
        None
    }
}

fn compile(pattern: &str) -> Result<Regex> {
    Regex::new(pattern).map_err(|e| Error::param(format!("bad pattern '{pattern}': {e}")))
}
