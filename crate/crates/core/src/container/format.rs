//! The `.bhc` container.
//!
//! ```text
//! offset 0   "BHC1"                      4 bytes
//!        4   version                     u32 LE
//!        8   manifest length L           u64 LE
//!       16   manifest                    L bytes of UTF-8 JSON
//!            zero padding to a 64-byte boundary (payload base)
//!            payload blobs, each starting 64-byte aligned
//! ```
//!
//! Manifest offsets are relative to the payload base. Each blob carries a
//! CRC-32 in the manifest. `stored_bytes` in the totals is the file size.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::bitpack::{pack_codes, unpack_codes, PackedPayload};
use super::safetensors::{Dtype, RawTensor};
use crate::codec::{decode_tensor, AuxParams, CodeMatrix};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const MAGIC: &[u8; 4] = b"BHC1";
pub const VERSION: u32 = 1;
pub const ALIGN: usize = 64;
const PREAMBLE: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryKind {
    Compressed,
    PassThrough,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Packed(PackedPayload),
    Raw(Vec<u8>),
}

impl Payload {
    pub fn as_bytes(&self) -> &[u8] {
        match self {
            Payload::Packed(p) => p.as_bytes(),
            Payload::Raw(b) => b,
        }
    }
}

/// One tensor inside a container.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub dtype: Dtype,
    pub pad_applied: bool,
    pub aux: Option<AuxParams>,
    pub payload: Payload,
}

impl TensorEntry {
    /// Packs a code matrix for a `rows x cols` tensor.
    pub fn compressed(name: impl Into<String>, dtype: Dtype, shape: (usize, usize), codes: &CodeMatrix, aux: AuxParams) -> Result<Self> {
        crate::codec::check_layout(codes, &aux, shape)?;
        let packed = pack_codes(codes.codes(), aux.bit_width()?)?;
        Ok(Self {
            name: name.into(),
            shape: vec![shape.0, shape.1],
            dtype,
            pad_applied: shape.1 % 2 == 1,
            aux: Some(aux),
            payload: Payload::Packed(packed),
        })
    }

    pub fn pass_through(name: impl Into<String>, tensor: RawTensor) -> Self {
        Self {
            name: name.into(),
            shape: tensor.shape,
            dtype: tensor.dtype,
            pad_applied: false,
            aux: None,
            payload: Payload::Raw(tensor.data),
        }
    }

    pub fn kind(&self) -> EntryKind {
        match self.payload {
            Payload::Packed(_) => EntryKind::Compressed,
            Payload::Raw(_) => EntryKind::PassThrough,
        }
    }

    pub fn element_count(&self) -> usize {
        self.shape.iter().product()
    }

    /// Size of the tensor in its original dtype.
    pub fn original_bytes(&self) -> usize {
        match (&self.payload, self.dtype.size()) {
            (Payload::Raw(b), _) => b.len(),
            (Payload::Packed(_), Some(s)) => s * self.element_count(),
            (Payload::Packed(_), None) => 4 * self.element_count(),
        }
    }

    pub fn payload_bytes(&self) -> usize {
        self.payload.as_bytes().len()
    }

    /// Stored bits per original element.
    pub fn bits_per_param(&self) -> f64 {
        match &self.payload {
            Payload::Packed(p) => (p.code_count() * p.bit_width() as usize) as f64 / self.element_count() as f64,
            Payload::Raw(b) => (b.len() * 8) as f64 / self.element_count().max(1) as f64,
        }
    }

    fn matrix_shape(&self) -> Result<(usize, usize)> {
        match self.shape[..] {
            [r, c] => Ok((r, c)),
            _ => Err(Error::corrupt(format!("compressed entry '{}' is not 2-D", self.name))),
        }
    }

    /// Unpacked codes of a compressed entry.
    pub fn code_matrix(&self) -> Result<CodeMatrix> {
        let (Payload::Packed(p), Some(aux)) = (&self.payload, &self.aux) else {
            return Err(Error::param(format!("entry '{}' is not compressed", self.name)));
        };
        let (rows, cols) = self.matrix_shape()?;
        CodeMatrix::new(rows, cols.div_ceil(2), aux.code_bound()?, unpack_codes(p)?)
    }

    /// Reconstructed `f32` matrix of a compressed entry.
    pub fn decode_matrix(&self) -> Result<Matrix> {
        let aux = self.aux.as_ref().ok_or_else(|| Error::param(format!("entry '{}' is not compressed", self.name)))?;
        decode_tensor(&self.code_matrix()?, aux, self.matrix_shape()?)
    }

    /// The tensor in its original dtype; lossy for compressed entries.
    pub fn to_raw(&self) -> Result<RawTensor> {
        match &self.payload {
            Payload::Raw(b) => Ok(RawTensor { dtype: self.dtype.clone(), shape: self.shape.clone(), data: b.clone() }),
            Payload::Packed(_) => {
                let m = self.decode_matrix()?;
                RawTensor::encode(self.dtype.clone(), self.shape.clone(), m.as_slice())
            }
        }
    }
}

/// Whole-container byte accounting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Totals {
    pub original_bytes: u64,
    pub stored_bytes: u64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub kind: EntryKind,
    pub shape: Vec<usize>,
    pub dtype: Dtype,
    pub pad_applied: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub aux: Option<AuxParams>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub bit_width: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub code_count: Option<usize>,
    pub offset: u64,
    pub length: u64,
    pub crc32: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
    pub entries: Vec<ManifestEntry>,
    pub totals: Totals,
}

/// In-memory container contents.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Container {
    pub entries: Vec<TensorEntry>,
    pub metadata: BTreeMap<String, String>,
}

#[inline]
fn align_up(n: usize) -> usize {
    n.div_ceil(ALIGN) * ALIGN
}

impl Container {
    pub fn new(entries: Vec<TensorEntry>) -> Self {
        Self { entries, metadata: BTreeMap::new() }
    }

    pub fn get(&self, name: &str) -> Option<&TensorEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    /// Serializes the container; returns the bytes and the manifest written.
    pub fn to_bytes(&self) -> Result<(Vec<u8>, Manifest)> {
        let mut seen = std::collections::HashSet::new();
        if let Some(dup) = self.entries.iter().find(|e| !seen.insert(e.name.as_str())) {
            return Err(Error::param(format!("duplicate entry name '{}'", dup.name)));
        }
        let mut offset = 0usize;
        let mut entries = Vec::with_capacity(self.entries.len());
        for e in &self.entries {
            let bytes = e.payload.as_bytes();
            let (bit_width, code_count) = match &e.payload {
                Payload::Packed(p) => (Some(p.bit_width()), Some(p.code_count())),
                Payload::Raw(_) => (None, None),
            };
            entries.push(ManifestEntry {
                name: e.name.clone(),
                kind: e.kind(),
                shape: e.shape.clone(),
                dtype: e.dtype.clone(),
                pad_applied: e.pad_applied,
                aux: e.aux,
                bit_width,
                code_count,
                offset: offset as u64,
                length: bytes.len() as u64,
                crc32: crc32fast::hash(bytes),
            });
            offset = align_up(offset + bytes.len());
        }
        let payload_len = offset;
        let original_bytes: u64 = self.entries.iter().map(|e| e.original_bytes() as u64).sum();
        let mut manifest = Manifest {
            format: "BHC".into(),
            version: VERSION,
            metadata: self.metadata.clone(),
            entries,
            totals: Totals { original_bytes, stored_bytes: 0, ratio: 0.0 },
        };

        // The totals describe the file that contains them; iterate to a fixed
        // point, never letting the manifest shrink so the loop terminates.
        let mut json = Vec::new();
        let mut stored = 0usize;
        for _ in 0..16 {
            manifest.totals.stored_bytes = stored as u64;
            manifest.totals.ratio = if stored == 0 { 0.0 } else { original_bytes as f64 / stored as f64 };
            let floor = json.len();
            json = serde_json::to_vec(&manifest).map_err(|e| Error::format(e.to_string()))?;
            json.resize(json.len().max(floor), b' ');
            let total = align_up(PREAMBLE + json.len()) + payload_len;
            if total == stored {
                break;
            }
            stored = total;
        }
        let base = align_up(PREAMBLE + json.len());
        debug_assert_eq!(base + payload_len, stored);

        let mut out = Vec::with_capacity(stored);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        out.resize(base, 0);
        for (e, m) in self.entries.iter().zip(&manifest.entries) {
            debug_assert_eq!(out.len(), base + m.offset as usize);
            out.extend_from_slice(e.payload.as_bytes());
            out.resize(align_up(out.len()), 0);
        }
        if out.len() != stored {
            return Err(Error::format("container size accounting did not converge"));
        }
        Ok((out, manifest))
    }

    /// Parses and validates a container image.
    pub fn from_bytes(bytes: &[u8]) -> Result<(Self, Manifest)> {
        let manifest = read_manifest(bytes)?;
        let base = align_up(PREAMBLE + manifest_len(bytes)?);
        let mut entries = Vec::with_capacity(manifest.entries.len());
        for m in &manifest.entries {
            let start = base
                .checked_add(m.offset as usize)
                .filter(|s| s % ALIGN == 0)
                .ok_or_else(|| Error::corrupt(format!("entry '{}' has a misaligned offset", m.name)))?;
            let end = start
                .checked_add(m.length as usize)
                .filter(|&e| e <= bytes.len())
                .ok_or_else(|| Error::corrupt(format!("entry '{}' extends past end of file", m.name)))?;
            let blob = &bytes[start..end];
            if crc32fast::hash(blob) != m.crc32 {
                return Err(Error::corrupt(format!("checksum mismatch in entry '{}'", m.name)));
            }
            let payload = match m.kind {
                EntryKind::PassThrough => {
                    if let Some(size) = m.dtype.size() {
                        if m.shape.iter().product::<usize>() * size != blob.len() {
                            return Err(Error::corrupt(format!("entry '{}' has the wrong byte length", m.name)));
                        }
                    }
                    Payload::Raw(blob.to_vec())
                }
                EntryKind::Compressed => {
                    let (Some(aux), Some(b), Some(count)) = (m.aux, m.bit_width, m.code_count) else {
                        return Err(Error::corrupt(format!("compressed entry '{}' lacks codec fields", m.name)));
                    };
                    aux.validate().map_err(|e| Error::corrupt(format!("entry '{}': {e}", m.name)))?;
                    if aux.bit_width()? != b {
                        return Err(Error::corrupt(format!("entry '{}' bit width disagrees with its parameters", m.name)));
                    }
                    let [rows, cols] = m.shape[..] else {
                        return Err(Error::corrupt(format!("compressed entry '{}' is not 2-D", m.name)));
                    };
                    if rows * cols.div_ceil(2) != count || (cols % 2 == 1) != m.pad_applied {
                        return Err(Error::corrupt(format!("entry '{}' code count disagrees with its shape", m.name)));
                    }
                    Payload::Packed(PackedPayload::from_parts(b, count, blob.to_vec())?)
                }
            };
            entries.push(TensorEntry {
                name: m.name.clone(),
                shape: m.shape.clone(),
                dtype: m.dtype.clone(),
                pad_applied: m.pad_applied,
                aux: m.aux,
                payload,
            });
        }
        Ok((Self { entries, metadata: manifest.metadata.clone() }, manifest))
    }
}

fn manifest_len(bytes: &[u8]) -> Result<usize> {
    if bytes.len() < PREAMBLE {
        return Err(Error::format("file is shorter than the container preamble"));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::format(format!("bad magic {:02x?}, expected \"BHC1\"", &bytes[..4])));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(Error::format(format!("unsupported container version {version}")));
    }
    let len = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    usize::try_from(len)
        .ok()
        .filter(|&l| PREAMBLE + l <= bytes.len())
        .ok_or_else(|| Error::corrupt(format!("manifest length {len} exceeds file size")))
}

/// Reads only the manifest.
pub fn read_manifest(bytes: &[u8]) -> Result<Manifest> {
    let len = manifest_len(bytes)?;
    let m: Manifest = serde_json::from_slice(&bytes[PREAMBLE..PREAMBLE + len])
        .map_err(|e| Error::corrupt(format!("manifest JSON: {e}")))?;
    if m.format != "BHC" || m.version != VERSION {
        return Err(Error::format(format!("manifest declares {} v{}", m.format, m.version)));
    }
    Ok(m)
}

pub fn write_container(container: &Container, path: impl AsRef<Path>) -> Result<Manifest> {
    let (bytes, manifest) = container.to_bytes()?;
    std::fs::write(path, bytes)?;
    Ok(manifest)
}

pub fn read_container(path: impl AsRef<Path>) -> Result<(Container, Manifest)> {
    Container::from_bytes(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{compress_matrix, CodebookKind};

    fn sample_entry(rows: usize, cols: usize) -> TensorEntry {
        let w = Matrix::from_fn(rows, cols, |r, c| ((r * 31 + c * 7) as f32).sin() * 0.03);
        let (codes, aux) = compress_matrix(&w, 0.1, 1600, 3, CodebookKind::GridLattice).unwrap();
        TensorEntry::compressed("w", Dtype::F32, (rows, cols), &codes, aux).unwrap()
    }

    #[test]
    fn empty_container_round_trips() {
        let (bytes, m) = Container::default().to_bytes().unwrap();
        assert_eq!(&bytes[..4], b"BHC1");
        assert_eq!(bytes.len() % ALIGN, 0);
        assert_eq!(m.totals.stored_bytes as usize, bytes.len());
        let (c, m2) = Container::from_bytes(&bytes).unwrap();
        assert!(c.entries.is_empty());
        assert_eq!(m, m2);
    }

    #[test]
    fn compressed_entry_round_trips() {
        let e = sample_entry(64, 64);
        let raw = TensorEntry::pass_through("b", RawTensor::from_f32(vec![3], &[1.0, 2.0, 3.0]));
        let c = Container::new(vec![e.clone(), raw.clone()]);
        let (bytes, manifest) = c.to_bytes().unwrap();
        let (back, _) = Container::from_bytes(&bytes).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.entries[0].code_matrix().unwrap(), e.code_matrix().unwrap());
        assert_eq!(manifest.totals.stored_bytes as usize, bytes.len());
        let expect = manifest.totals.original_bytes as f64 / bytes.len() as f64;
        assert_eq!(manifest.totals.ratio, expect);
    }

    #[test]
    fn payload_size_matches_bit_arithmetic() {
        let e = sample_entry(64, 63);
        // 64 rows * 32 pairs * 13 bits / 8
        assert_eq!(e.payload_bytes(), 64 * 32 * 13 / 8);
        assert!(e.pad_applied);
        let aux_json = serde_json::to_vec(&e.aux.unwrap()).unwrap();
        assert!(aux_json.len() < 128, "{}", aux_json.len());
    }

    #[test]
    fn rejects_bad_magic_version_and_tampering() {
        let c = Container::new(vec![sample_entry(8, 8)]);
        let (bytes, manifest) = c.to_bytes().unwrap();

        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(Container::from_bytes(&bad), Err(Error::Format(_))));

        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(matches!(Container::from_bytes(&bad), Err(Error::Format(_))));

        let mut bad = bytes.clone();
        let base = bytes.len() - align_up(manifest.entries[0].length as usize);
        bad[base] ^= 0x01;
        assert!(matches!(Container::from_bytes(&bad), Err(Error::Corrupt(m)) if m.contains("checksum")));

        assert!(Container::from_bytes(&bytes[..bytes.len() - 64]).is_err());
        assert!(Container::from_bytes(&bytes[..10]).is_err());
    }

    #[test]
    fn duplicate_names_rejected() {
        let e = sample_entry(4, 4);
        assert!(Container::new(vec![e.clone(), e]).to_bytes().is_err());
    }
}
