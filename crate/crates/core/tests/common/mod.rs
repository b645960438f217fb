//! Independent reference implementations used as test oracles. Nothing here
//! calls into the library's numeric code.
#![allow(dead_code)]

use birkhoff::codec::{AuxParams, BoxStats};
use birkhoff::Matrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Lattice coordinates straight from the grid definition.
pub fn lattice_points(aux: &AuxParams) -> Vec<[f64; 2]> {
    let v = (aux.codebook_size as f64).sqrt().round() as u32;
    assert_eq!(v * v, aux.codebook_size);
    let l = aux.box_len;
    let [cx, cy] = aux.stats.centroid;
    (0..aux.codebook_size)
        .map(|t| {
            let (ix, iy) = (t % v, t / v);
            [cx - l / 2.0 + (ix as f64 + 0.5) * l / v as f64, cy - l / 2.0 + (iy as f64 + 0.5) * l / v as f64]
        })
        .collect()
}

/// Smallest index among the Euclidean-nearest points.
pub fn brute_nearest(points: &[[f64; 2]], p: [f64; 2]) -> u32 {
    let mut best = (f64::INFINITY, 0u32);
    for (i, c) in points.iter().enumerate() {
        let (dx, dy) = (p[0] - c[0], p[1] - c[1]);
        let d = dx * dx + dy * dy;
        if d < best.0 {
            best = (d, i as u32);
        }
    }
    best.1
}

pub fn linf(p: [f64; 2], q: [f64; 2]) -> f64 {
    (p[0] - q[0]).abs().max((p[1] - q[1]).abs())
}

pub fn category(p: [f64; 2], stats: &BoxStats, l: f64, big_m: u32) -> u32 {
    let d = linf(p, stats.centroid);
    if d <= l / 2.0 {
        return 0;
    }
    let raw = (big_m as f64 * (2.0 * d - l) / (2.0 * stats.farthest - l)).ceil();
    raw.clamp(1.0, big_m as f64) as u32
}

pub fn scale(m: u32, big_m: u32, l: f64, lf: f64) -> f64 {
    l / (l + (m as f64 / big_m as f64) * (2.0 * lf - l))
}

/// Reconstruction of `code` from first principles.
pub fn decode(code: u32, aux: &AuxParams, points: &[[f64; 2]]) -> [f64; 2] {
    let u = aux.codebook_size;
    let (m, theta) = (code / u, code % u);
    let c = points[theta as usize];
    let s = scale(m, aux.categories, aux.box_len, aux.stats.farthest);
    let [ox, oy] = aux.stats.centroid;
    [(c[0] - ox) / s + ox, (c[1] - oy) / s + oy]
}

pub fn mae(a: &[f32], b: &[f32]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(&x, &y)| (x as f64 - y as f64).abs()).sum::<f64>() / a.len() as f64
}

/// `A * W` accumulated in f64.
pub fn gemm_f64(a: &Matrix, w: &Matrix) -> Vec<f64> {
    let (m, k) = a.shape();
    let n = w.cols();
    let mut c = vec![0.0f64; m * n];
    for i in 0..m {
        for kk in 0..k {
            let av = a.get(i, kk) as f64;
            for j in 0..n {
                c[i * n + j] += av * w.get(kk, j) as f64;
            }
        }
    }
    c
}

/// max |x - ref| / max |ref|
pub fn rel_err(x: &[f32], reference: &[f64]) -> f64 {
    let scale = reference.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    x.iter().zip(reference).fold(0.0f64, |m, (&a, &b)| m.max((a as f64 - b).abs())) / scale
}

pub fn gaussian(rows: usize, cols: usize, std: f64, rng: &mut ChaCha8Rng) -> Matrix {
    // Box-Muller, kept local so the oracle does not share the generator under test.
    Matrix::from_fn(rows, cols, |_, _| {
        let u1: f64 = rng.random_range(f64::EPSILON..1.0);
        let u2: f64 = rng.random();
        ((-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos() * std) as f32
    })
}
