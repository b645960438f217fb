//! Storage: bit-packed code payloads, the `.bhc` container, safetensors
//! interchange and the compression eligibility policy.

mod bitpack;
mod eligibility;
mod format;
mod safetensors;

pub use bitpack::{pack_codes, unpack_codes, PackedPayload, MAX_BIT_WIDTH};
pub use eligibility::{EligibilityPolicy, DEFAULT_MIN_ELEMENTS};
pub use format::{
    read_container, read_manifest, write_container, Container, EntryKind, Manifest, ManifestEntry, Payload,
    TensorEntry, Totals, ALIGN, MAGIC, VERSION,
};
pub use safetensors::{
    emit_safetensors, ingest_safetensors, parse_safetensors, serialize_safetensors, Dtype, RawTensor, TensorMap,
};
