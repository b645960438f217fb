//! Minimal safetensors reader and writer.
//!
//! Layout: an 8-byte little-endian header length, a JSON object mapping
//! tensor names to `{dtype, shape, data_offsets}` (plus an optional
//! `__metadata__` string map), then the raw row-major tensor bytes.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use half::{bf16, f16};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};

/// Element type of a stored tensor. Types the codec cannot read are kept by
/// name so they still round-trip.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Dtype {
    F32,
    F16,
    BF16,
    Other(String),
}

impl Dtype {
    pub fn parse(name: &str) -> Self {
        match name {
            "F32" => Dtype::F32,
            "F16" => Dtype::F16,
            "BF16" => Dtype::BF16,
            other => Dtype::Other(other.to_string()),
        }
    }

    pub fn name(&self) -> &str {
        match self {
            Dtype::F32 => "F32",
            Dtype::F16 => "F16",
            Dtype::BF16 => "BF16",
            Dtype::Other(s) => s,
        }
    }

    /// Bytes per element, `None` for unrecognized names.
    pub fn size(&self) -> Option<usize> {
        match self {
            Dtype::F32 => Some(4),
            Dtype::F16 | Dtype::BF16 => Some(2),
            Dtype::Other(s) => match s.as_str() {
                "BOOL" | "U8" | "I8" | "F8_E4M3" | "F8_E5M2" => Some(1),
                "U16" | "I16" => Some(2),
                "U32" | "I32" => Some(4),
                "U64" | "I64" | "F64" => Some(8),
                _ => None,
            },
        }
    }

    /// Whether the codec can read this type as `f32`.
    pub fn is_codec_float(&self) -> bool {
        matches!(self, Dtype::F32 | Dtype::F16 | Dtype::BF16)
    }
}

impl fmt::Display for Dtype {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl Serialize for Dtype {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for Dtype {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        Ok(Dtype::parse(&String::deserialize(d)?))
    }
}

/// A tensor as stored on disk: dtype, shape and raw little-endian bytes.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTensor {
    pub dtype: Dtype,
    pub shape: Vec<usize>,
    pub data: Vec<u8>,
}

impl RawTensor {
    pub fn from_f32(shape: Vec<usize>, values: &[f32]) -> Self {
        Self::encode(Dtype::F32, shape, values).expect("F32 is always encodable")
    }

    /// Stores `values` as `dtype`, rounding to nearest for half types.
    pub fn encode(dtype: Dtype, shape: Vec<usize>, values: &[f32]) -> Result<Self> {
        if shape.iter().product::<usize>() != values.len() {
            return Err(Error::shape(format!("shape {shape:?} does not hold {} values", values.len())));
        }
        let data = match dtype {
            Dtype::F32 => values.iter().flat_map(|v| v.to_le_bytes()).collect(),
            Dtype::F16 => values.iter().flat_map(|&v| f16::from_f32(v).to_le_bytes()).collect(),
            Dtype::BF16 => values.iter().flat_map(|&v| bf16::from_f32(v).to_le_bytes()).collect(),
            Dtype::Other(ref s) => return Err(Error::param(format!("cannot encode floats as {s}"))),
        };
        Ok(Self { dtype, shape, data })
    }

    pub fn element_count(&self) -> usize {
        self.shape.iter().product()
    }

    /// Values widened to `f32`; `None` for dtypes the codec does not read.
    pub fn to_f32(&self) -> Option<Vec<f32>> {
        let v = match self.dtype {
            Dtype::F32 => self.data.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect(),
            Dtype::F16 => self
                .data
                .chunks_exact(2)
                .map(|c| f16::from_le_bytes([c[0], c[1]]).to_f32())
                .collect(),
            Dtype::BF16 => self
                .data
                .chunks_exact(2)
                .map(|c| bf16::from_le_bytes([c[0], c[1]]).to_f32())
                .collect(),
            Dtype::Other(_) => return None,
        };
        Some(v)
    }
}

/// Named tensors plus free-form string metadata, ordered by name.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TensorMap {
    pub tensors: BTreeMap<String, RawTensor>,
    pub metadata: BTreeMap<String, String>,
}

impl TensorMap {
    pub fn insert(&mut self, name: impl Into<String>, t: RawTensor) {
        self.tensors.insert(name.into(), t);
    }

    pub fn total_bytes(&self) -> usize {
        self.tensors.values().map(|t| t.data.len()).sum()
    }
}

#[derive(Deserialize)]
struct HeaderEntry {
    dtype: String,
    shape: Vec<usize>,
    data_offsets: [usize; 2],
}

/// Parses a safetensors image held in memory.
pub fn parse_safetensors(bytes: &[u8]) -> Result<TensorMap> {
    if bytes.len() < 8 {
        return Err(Error::format("file shorter than the 8-byte header length"));
    }
    let header_len = u64::from_le_bytes(bytes[..8].try_into().unwrap());
    let header_end = usize::try_from(header_len)
        .ok()
        .and_then(|n| n.checked_add(8))
        .filter(|&end| end <= bytes.len())
        .ok_or_else(|| Error::format(format!("header length {header_len} exceeds file size {}", bytes.len())))?;
    let header: Map<String, Value> = serde_json::from_slice(&bytes[8..header_end])
        .map_err(|e| Error::format(format!("malformed header JSON: {e}")))?;
    let data = &bytes[header_end..];

    let mut map = TensorMap::default();
    let mut ranges = Vec::new();
    for (name, value) in header {
        if name == "__metadata__" {
            map.metadata = serde_json::from_value(value)
                .map_err(|e| Error::format(format!("__metadata__ must map strings to strings: {e}")))?;
            continue;
        }
        let entry: HeaderEntry =
            serde_json::from_value(value).map_err(|e| Error::format(format!("tensor '{name}': {e}")))?;
        let [start, end] = entry.data_offsets;
        if start > end || end > data.len() {
            return Err(Error::format(format!(
                "tensor '{name}' offsets [{start}, {end}] outside data section of {} bytes",
                data.len()
            )));
        }
        let dtype = Dtype::parse(&entry.dtype);
        let elems = entry
            .shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::format(format!("tensor '{name}' shape overflows")))?;
        if let Some(size) = dtype.size() {
            if elems.checked_mul(size) != Some(end - start) {
                return Err(Error::format(format!(
                    "tensor '{name}' is {} bytes but {dtype} {:?} needs {}",
                    end - start,
                    entry.shape,
                    elems.saturating_mul(size)
                )));
            }
        }
        ranges.push((start, end, name.clone()));
        map.tensors.insert(name, RawTensor { dtype, shape: entry.shape, data: data[start..end].to_vec() });
    }
    ranges.sort();
    for w in ranges.windows(2) {
        if w[1].0 < w[0].1 {
            return Err(Error::format(format!("tensors '{}' and '{}' overlap", w[0].2, w[1].2)));
        }
    }
    Ok(map)
}

/// Serializes tensors in name order with contiguous offsets.
pub fn serialize_safetensors(map: &TensorMap) -> Result<Vec<u8>> {
    let mut header = Map::new();
    if !map.metadata.is_empty() {
        header.insert("__metadata__".into(), serde_json::to_value(&map.metadata).unwrap());
    }
    let mut offset = 0usize;
    for (name, t) in &map.tensors {
        if name == "__metadata__" {
            return Err(Error::param("'__metadata__' is reserved"));
        }
        let end = offset + t.data.len();
        header.insert(
            name.clone(),
            serde_json::json!({ "dtype": t.dtype.name(), "shape": t.shape, "data_offsets": [offset, end] }),
        );
        offset = end;
    }
    let mut json = serde_json::to_vec(&Value::Object(header)).unwrap();
    while json.len() % 8 != 0 {
        json.push(b' ');
    }
    let mut out = Vec::with_capacity(8 + json.len() + offset);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for t in map.tensors.values() {
        out.extend_from_slice(&t.data);
    }
    Ok(out)
}

pub fn ingest_safetensors(path: impl AsRef<Path>) -> Result<TensorMap> {
    parse_safetensors(&std::fs::read(path)?)
}

pub fn emit_safetensors(map: &TensorMap, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, serialize_safetensors(map)?)?;
    Ok(())
}
