//! Timing harness and synthetic weights.
//!
//! Each case multiplies a random activation matrix by a compressed random
//! weight three ways: dense GEMM on already-decoded weights, decode then
//! GEMM, and the fused kernel. Outputs are cross-checked before any clock
//! starts; a case whose strategies disagree yields an error, never a time.

use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::codec::{compress_matrix, decode_tensor, mae, CodebookKind};
use crate::container::{RawTensor, TensorMap};
use crate::error::{Error, Result};
use crate::hyperlinear::{blocked_gemm, fused_gemm, BlockConfig, FusedOperand};
use crate::matrix::Matrix;

pub const DEFAULT_SEED: u64 = 0x5eed_b1c0;
pub const DEFAULT_STD: f32 = 0.02;
/// Largest relative deviation allowed between strategies before timing.
pub const GATE_TOLERANCE: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Dense,
    DecompressThenGemm,
    Fused,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Dense, Strategy::DecompressThenGemm, Strategy::Fused];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Dense => "dense",
            Strategy::DecompressThenGemm => "decompress_then_gemm",
            Strategy::Fused => "fused",
        }
    }
}

/// One `(M, K, N)` problem, timed under every strategy.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchCase {
    pub label: String,
    pub m: usize,
    pub k: usize,
    pub n: usize,
    pub repeats: usize,
    pub seed: u64,
    pub box_len: f64,
    pub codebook_size: u32,
    pub categories: u32,
    pub block: BlockConfig,
}

impl BenchCase {
    pub fn new(label: impl Into<String>, (m, k, n): (usize, usize, usize)) -> Self {
        Self {
            label: label.into(),
            m,
            k,
            n,
            repeats: 5,
            seed: DEFAULT_SEED,
            box_len: 0.1,
            codebook_size: 1600,
            categories: 3,
            block: BlockConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.repeats < 3 {
            return Err(Error::param(format!("case '{}': repeats must be at least 3", self.label)));
        }
        if self.m == 0 || self.k == 0 || self.n == 0 {
            return Err(Error::param(format!("case '{}': empty problem", self.label)));
        }
        self.block.validate()
    }
}

/// Timing of one strategy on one case. Field order is the CSV column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub label: String,
    pub strategy: Strategy,
    pub m: usize,
    pub k: usize,
    pub n: usize,
    pub median_ms: f64,
    pub min_ms: f64,
    pub workers: usize,
    pub checksum: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaseSummary {
    pub label: String,
    pub ratio: f64,
    pub mae: f64,
    pub bit_width: u32,
    /// Largest relative deviation from the dense output seen by the gate.
    pub max_rel_diff: f64,
    pub verified: bool,
    /// Fused median over dense median.
    pub slowdown: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub machine: String,
    pub workers: usize,
    pub rows: Vec<BenchRow>,
    pub cases: Vec<CaseSummary>,
}

impl BenchReport {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in &self.rows {
            w.serialize(row).map_err(|e| Error::format(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::format(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::format(e.to_string()))
    }

    pub fn row(&self, label: &str, strategy: Strategy) -> Option<&BenchRow> {
        self.rows.iter().find(|r| r.label == label && r.strategy == strategy)
    }
}

/// Short description of the host, recorded with every report.
pub fn machine_descriptor() -> String {
    let cpus = std::thread::available_parallelism().map_or(1, |n| n.get());
    let model = std::fs::read_to_string("/proc/cpuinfo")
        .ok()
        .and_then(|s| {
            s.lines()
                .find(|l| l.starts_with("model name"))
                .and_then(|l| l.split(':').nth(1))
                .map(|m| m.trim().to_string())
        })
        .unwrap_or_else(|| "unknown cpu".into());
    format!("{}-{}, {cpus} threads, {model}", std::env::consts::OS, std::env::consts::ARCH)
}

/// `rows x cols` matrix of independent `N(0, std^2)` draws.
pub fn gaussian_matrix(rows: usize, cols: usize, std: f32, rng: &mut ChaCha8Rng) -> Result<Matrix> {
    let normal = Normal::new(0.0f32, std).map_err(|e| Error::param(format!("std {std}: {e}")))?;
    Matrix::new(rows, cols, normal.sample_iter(rng).take(rows * cols).collect())
}

/// A transformer-shaped checkpoint of Gaussian weights.
///
/// Each block has `qkv` (3w x w), `proj` (w x w), `fc1` (4w x w) and
/// `fc2` (w x 4w) matrices plus bias and norm vectors, so almost all
/// parameters sit in large 2-D tensors.
pub fn synthetic_model(blocks: usize, width: usize, std: f32, seed: u64) -> Result<TensorMap> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut map = TensorMap::default();
    for b in 0..blocks {
        for (name, rows, cols) in [
            ("attn.qkv", 3 * width, width),
            ("attn.proj", width, width),
            ("mlp.fc1", 4 * width, width),
            ("mlp.fc2", width, 4 * width),
        ] {
            let w = gaussian_matrix(rows, cols, std, &mut rng)?;
            map.insert(format!("blocks.{b}.{name}.weight"), RawTensor::from_f32(vec![rows, cols], w.as_slice()));
            let bias = gaussian_matrix(1, rows, std, &mut rng)?;
            map.insert(format!("blocks.{b}.{name}.bias"), RawTensor::from_f32(vec![rows], bias.as_slice()));
        }
        for norm in ["norm1", "norm2"] {
            map.insert(format!("blocks.{b}.{norm}.weight"), RawTensor::from_f32(vec![width], &vec![1.0; width]));
            map.insert(format!("blocks.{b}.{norm}.bias"), RawTensor::from_f32(vec![width], &vec![0.0; width]));
        }
    }
    map.metadata.insert("generator".into(), format!("gaussian std={std} seed={seed}"));
    Ok(map)
}

fn max_rel_diff(reference: &Matrix, other: &Matrix) -> f64 {
    let scale = reference.as_slice().iter().fold(0.0f64, |m, &v| m.max(v.abs() as f64)).max(f64::MIN_POSITIVE);
    let diff = reference
        .as_slice()
        .iter()
        .zip(other.as_slice())
        .fold(0.0f64, |m, (&a, &b)| m.max((a as f64 - b as f64).abs()));
    diff / scale
}

fn checksum(c: &Matrix) -> f64 {
    c.as_slice().iter().map(|&v| v as f64).sum()
}

/// Median and minimum of `repeats` timed calls after one discarded warm-up.
pub fn time_repeats(repeats: usize, mut f: impl FnMut() -> Result<()>) -> Result<(Duration, Duration)> {
    f()?;
    let mut times = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let t = Instant::now();
        f()?;
        times.push(t.elapsed());
    }
    times.sort();
    let mid = times.len() / 2;
    let median = if times.len() % 2 == 1 { times[mid] } else { (times[mid - 1] + times[mid]) / 2 };
    Ok((median, times[0]))
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

/// Runs every case sequentially on the current rayon pool.
pub fn run_suite(cases: &[BenchCase]) -> Result<BenchReport> {
    let workers = rayon::current_num_threads();
    let mut rows = Vec::new();
    let mut summaries = Vec::new();
    for case in cases {
        case.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(case.seed);
        let w = gaussian_matrix(case.k, case.n, DEFAULT_STD, &mut rng)?;
        let a = gaussian_matrix(case.m, case.k, 1.0, &mut rng)?;
        let (codes, aux) =
            compress_matrix(&w, case.box_len, case.codebook_size, case.categories, CodebookKind::GridLattice)?;
        let decoded = decode_tensor(&codes, &aux, (case.k, case.n))?;
        let bit_width = aux.bit_width()?;
        let ratio = (32 * case.k * case.n) as f64 / (codes.codes().len() * bit_width as usize) as f64;
        let err = mae(&w, &decoded)?;
        let op = FusedOperand::new(codes, aux, (case.k, case.n))?;
        let cfg = case.block;

        let run = |s: Strategy| -> Result<Matrix> {
            match s {
                Strategy::Dense => blocked_gemm(&a, &decoded, &cfg),
                Strategy::DecompressThenGemm => blocked_gemm(&a, &op.decode_all()?, &cfg),
                Strategy::Fused => fused_gemm(&a, &op, &cfg),
            }
        };

        let outputs = Strategy::ALL.map(run);
        let [dense, decompress, fused] = outputs;
        let (dense, decompress, fused) = (dense?, decompress?, fused?);
        let worst = max_rel_diff(&dense, &decompress).max(max_rel_diff(&dense, &fused));
        if !(worst <= GATE_TOLERANCE) {
            return Err(Error::Mismatch(format!("case '{}': relative difference {worst:e}", case.label)));
        }

        let mut medians = [0.0; 3];
        for (i, (s, out)) in Strategy::ALL.into_iter().zip([&dense, &decompress, &fused]).enumerate() {
            let (median, min) = time_repeats(case.repeats, || run(s).map(drop))?;
            medians[i] = ms(median);
            rows.push(BenchRow {
                label: case.label.clone(),
                strategy: s,
                m: case.m,
                k: case.k,
                n: case.n,
                median_ms: ms(median),
                min_ms: ms(min),
                workers,
                checksum: checksum(out),
            });
        }
        summaries.push(CaseSummary {
            label: case.label.clone(),
            ratio,
            mae: err,
            bit_width,
            max_rel_diff: worst,
            verified: true,
            slowdown: medians[2] / medians[0],
        });
    }
    Ok(BenchReport { machine: machine_descriptor(), workers, rows, cases: summaries })
}
