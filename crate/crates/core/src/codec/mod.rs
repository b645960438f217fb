//! Pair codec: grouping, box statistics, outlier categories, codebooks and
//! per-pair / per-tensor encode and decode.
//!
//! A weight matrix is cut into row-wise 1x2 pairs. Pairs inside a square box
//! of side `l` around the centroid are snapped to the nearest codeword;
//! pairs outside are first pulled toward the centroid by a category-specific
//! factor. Each pair is stored as the single integer `theta + m * U`.

mod codebook;
mod pairs;
mod params;
mod stats;
mod tensor;

pub use codebook::{build_codebook, Codebook};
pub use pairs::{pad_value, pair_split, PairField};
pub use params::{bits_for_bound, default_step, grid_side, AuxParams, CodebookKind};
pub use stats::{
    assign_category, category_for_distance, compute_stats, distance, inner_proportion, scale_factor, stats_of,
    BoxStats, Category,
};
pub use tensor::{
    compress_matrix, decode_pair, decode_tensor, encode_field, encode_pair, encode_tensor, mae, max_abs_error,
    scaled_point, split_code, CodeMatrix, DecodeTable,
};

pub(crate) use tensor::{check_layout, decode_with_table};
