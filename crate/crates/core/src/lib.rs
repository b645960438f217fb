//! Data-free neural weight compression.
//!
//! Weight matrices are regrouped into 1x2 pairs and each pair is replaced by
//! one integer index into a small two-dimensional codebook laid out inside a
//! box around the pair centroid. Outlying pairs carry a category in the high
//! part of the index that tells the decoder how far to push the codeword back
//! out. The crate provides:
//!
//! - [`codec`]: pair grouping, statistics, codebooks, encode and decode
//! - [`search`]: per-tensor grid search over `(l, U, M)` minimizing MAE, and presets
//! - [`container`]: bit-packed `.bhc` container and safetensors I/O
//! - [`model`]: checkpoint-level compress, decompress and verify with reports
//! - [`hyperlinear`]: blocked GEMM that decodes codes inside the inner loop
//! - [`bench`]: timing harness and synthetic weight generator

pub mod bench;
pub mod codec;
pub mod container;
pub mod error;
pub mod hyperlinear;
pub mod matrix;
pub mod model;
pub mod search;

pub use error::{Error, Result};
pub use matrix::Matrix;
