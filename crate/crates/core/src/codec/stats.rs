use serde::{Deserialize, Serialize};

use super::pairs::PairField;
use crate::error::{Error, Result};

/// Outlier tier of a pair: 0 for pairs inside the box, `1..=M` otherwise.
pub type Category = u32;

/// Per-tensor pair statistics: centroid and farthest Chebyshev distance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub centroid: [f64; 2],
    pub farthest: f64,
}

/// Chebyshev (L-infinity) distance, so that `dist <= l/2` means "inside the box".
#[inline]
pub fn distance(p: [f64; 2], center: [f64; 2]) -> f64 {
    (p[0] - center[0]).abs().max((p[1] - center[1]).abs())
}

#[inline]
pub(crate) fn widen(p: [f32; 2]) -> [f64; 2] {
    [p[0] as f64, p[1] as f64]
}

/// Centroid and farthest distance over every pair in the field.
pub fn compute_stats(pf: &PairField) -> Result<BoxStats> {
    stats_of(pf.pairs().map(widen))
}

/// Same as [`compute_stats`] for an arbitrary pair sequence.
pub fn stats_of<I>(pairs: I) -> Result<BoxStats>
where
    I: Iterator<Item = [f64; 2]> + Clone,
{
    let mut n = 0usize;
    let mut sum = [0.0f64; 2];
    for p in pairs.clone() {
        sum[0] += p[0];
        sum[1] += p[1];
        n += 1;
    }
    if n == 0 {
        return Err(Error::shape("no pairs to summarize"));
    }
    let centroid = [sum[0] / n as f64, sum[1] / n as f64];
    let farthest = pairs.map(|p| distance(p, centroid)).fold(0.0f64, f64::max);
    Ok(BoxStats { centroid, farthest })
}

/// Category of a pair at distance `dist` from the centroid.
///
/// Interior points (`dist <= l/2`) are category 0; outliers are spread over
/// `1..=M` linearly in `2*dist - l` relative to `2*l_f - l`.
pub fn category_for_distance(dist: f64, farthest: f64, box_len: f64, categories: u32) -> Result<Category> {
    if !(box_len > 0.0) || !box_len.is_finite() {
        return Err(Error::param(format!("box length must be positive, got {box_len}")));
    }
    if categories == 0 {
        return Err(Error::param("category count must be at least 1"));
    }
    let half = box_len / 2.0;
    if dist <= half {
        return Ok(0);
    }
    let spread = 2.0 * farthest - box_len;
    assert!(spread > 0.0, "pair at distance {dist} exceeds farthest distance {farthest}");
    let raw = (categories as f64 * (2.0 * dist - box_len) / spread).ceil();
    Ok(raw.clamp(1.0, categories as f64) as Category)
}

/// Category of `pair` under the given statistics.
pub fn assign_category(pair: [f64; 2], stats: &BoxStats, box_len: f64, categories: u32) -> Result<Category> {
    category_for_distance(distance(pair, stats.centroid), stats.farthest, box_len, categories)
}

/// Shrink factor applied to category-`m` pairs before encoding.
///
/// `s = l / (l + (m/M) * (2*l_f - l))`; exactly 1 for `m = 0`.
pub fn scale_factor(m: Category, categories: u32, box_len: f64, farthest: f64) -> Result<f64> {
    if !(box_len > 0.0) || !box_len.is_finite() || !farthest.is_finite() {
        return Err(Error::param(format!("invalid box length {box_len} or farthest distance {farthest}")));
    }
    if categories == 0 || m > categories {
        return Err(Error::param(format!("category {m} outside 0..={categories}")));
    }
    if m == 0 {
        return Ok(1.0);
    }
    let denom = box_len + (m as f64 / categories as f64) * (2.0 * farthest - box_len);
    if !(denom > 0.0) {
        return Err(Error::param(format!("scale denominator {denom} is not positive for category {m}")));
    }
    Ok(box_len / denom)
}

/// Fraction of pairs that fall inside the box of side `box_len`.
pub fn inner_proportion(pf: &PairField, stats: &BoxStats, box_len: f64) -> f64 {
    if pf.is_empty() {
        return 0.0;
    }
    let half = box_len / 2.0;
    let inside = pf.pairs().filter(|&p| distance(widen(p), stats.centroid) <= half).count();
    inside as f64 / pf.len() as f64
}
