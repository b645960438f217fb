//! Acceptance criteria. Each test prints one PASS/FAIL line; run with
//! `cargo test -p birkhoff --test acceptance -- --nocapture --test-threads=1`.

mod common;

use std::time::Instant;

use birkhoff::bench::{run_suite, synthetic_model, BenchCase, Strategy, DEFAULT_STD};
use birkhoff::codec::{
    bits_for_bound, build_codebook, decode_pair, encode_pair, scaled_point, split_code, AuxParams, BoxStats,
    CodebookKind,
};
use birkhoff::container::{
    emit_safetensors, ingest_safetensors, pack_codes, read_container, unpack_codes, Dtype, EntryKind, RawTensor,
    TensorMap,
};
use birkhoff::hyperlinear::{fused_gemm, reference_gemm, with_workers, BlockConfig, FusedOperand};
use birkhoff::model::{compress_model, decompress_model, CompressOptions};
use birkhoff::search::{find_preset, grid_search, SearchSpace};
use birkhoff::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn verdict(n: u32, title: &str, ok: bool, detail: String) {
    println!("criterion {n:>2} {title:<32} {} ({detail})", if ok { "PASS" } else { "FAIL" });
}

fn check(n: u32, title: &str, ok: bool, detail: String) {
    verdict(n, title, ok, detail.clone());
    assert!(ok, "criterion {n} failed: {detail}");
}

fn random_aux(rng: &mut ChaCha8Rng, max_u: u32) -> AuxParams {
    let l = rng.random_range(0.01..1.0);
    let stats = BoxStats {
        centroid: [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)],
        farthest: l * rng.random_range(0.0..6.0),
    };
    AuxParams::new(l, rng.random_range(2..=max_u), rng.random_range(1..=3), stats, CodebookKind::GridLattice).unwrap()
}

fn random_pair(rng: &mut ChaCha8Rng, stats: &BoxStats) -> [f64; 2] {
    let r = stats.farthest;
    let c = stats.centroid;
    [c[0] + rng.random_range(-r..=r), c[1] + rng.random_range(-r..=r)]
}

#[test]
fn criterion_01_round_trip_integrity() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut failures = 0usize;
    let mut codes_checked = 0usize;
    for _ in 0..1000 {
        let u = rng.random_range(2..=400u32);
        let big_m = rng.random_range(1..=3u32);
        let bound = (big_m + 1) * u;
        let b = bits_for_bound(bound);
        if (1u64 << b) < bound as u64 || (b > 1 && (1u64 << (b - 1)) >= bound as u64) {
            failures += 1;
        }
        let codes: Vec<u32> = (0..bound).collect();
        for &c in &codes {
            if split_code(c, u) != (c / u, c % u) || c / u > big_m {
                failures += 1;
            }
        }
        let mut shuffled: Vec<u32> = (0..257).map(|_| rng.random_range(0..bound)).collect();
        shuffled.extend_from_slice(&codes);
        if unpack_codes(&pack_codes(&shuffled, b).unwrap()).unwrap() != shuffled {
            failures += 1;
        }
        codes_checked += shuffled.len();
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        1,
        "round-trip integrity",
        failures == 0 && secs < 10.0,
        format!("1000 configs, {codes_checked} codes, {failures} failures, {secs:.2} s"),
    );
}

#[test]
fn criterion_02_encoder_optimality() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut mismatches = 0usize;
    let mut total = 0usize;
    for _ in 0..20 {
        let aux = random_aux(&mut rng, 2500);
        let cb = build_codebook(&aux).unwrap();
        let points = common::lattice_points(&aux);
        for _ in 0..5000 {
            let pair = random_pair(&mut rng, &aux.stats);
            let (p, m) = scaled_point(pair, &aux).unwrap();
            let code = encode_pair(pair, &aux, &cb).unwrap();
            let expected = common::brute_nearest(cb.points(), p) + m * aux.codebook_size;
            // the oracle lattice must agree with the codebook up to rounding
            let oracle = common::brute_nearest(&points, p) + m * aux.codebook_size;
            if code != expected || m != common::category(pair, &aux.stats, aux.box_len, aux.categories) {
                mismatches += 1;
            }
            if oracle != expected {
                let d = |t: u32| common::linf(p, points[(t % aux.codebook_size) as usize]);
                assert!((d(oracle) - d(expected)).abs() < 1e-12, "lattice oracle disagrees beyond rounding");
            }
            total += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        2,
        "encoder optimality",
        mismatches == 0 && secs < 30.0,
        format!("{total} pairs over 20 parameter sets, {mismatches} mismatches, {secs:.2} s"),
    );
}

#[test]
fn criterion_03_scaling_containment() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut violations = 0usize;
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let aux = random_aux(&mut rng, 1600);
        for _ in 0..10_000 {
            let pair = random_pair(&mut rng, &aux.stats);
            let (p, _) = scaled_point(pair, &aux).unwrap();
            let excess = common::linf(p, aux.stats.centroid) - aux.box_len / 2.0;
            worst = worst.max(excess);
            if excess > 1e-9 {
                violations += 1;
            }
        }
    }
    check(
        3,
        "scaling containment",
        violations == 0,
        format!("1000000 pairs, {violations} violations, worst excess {worst:e}"),
    );
}

#[test]
fn criterion_04_reconstruction_bound() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut violations = 0usize;
    let mut interior = 0usize;
    let mut worst_ratio = 0.0f64;
    for side in [4u32, 8, 40] {
        for _ in 0..50 {
            let mut aux = random_aux(&mut rng, 4);
            aux = AuxParams::new(aux.box_len, side * side, aux.categories, aux.stats, CodebookKind::GridLattice).unwrap();
            let cb = build_codebook(&aux).unwrap();
            let bound = aux.box_len / (2.0 * side as f64);
            for _ in 0..2000 {
                let h = aux.box_len / 2.0;
                let c = aux.stats.centroid;
                let pair = [c[0] + rng.random_range(-h..=h), c[1] + rng.random_range(-h..=h)];
                let code = encode_pair(pair, &aux, &cb).unwrap();
                if split_code(code, aux.codebook_size).0 != 0 {
                    continue;
                }
                interior += 1;
                let err = common::linf(pair, decode_pair(code, &aux, &cb).unwrap());
                worst_ratio = worst_ratio.max(err / bound);
                if err > bound {
                    violations += 1;
                }
            }
        }
    }
    check(
        4,
        "reconstruction bound",
        violations == 0 && interior > 0,
        format!("V in {{4, 8, 40}}, {interior} interior pairs, {violations} violations, worst err/(l/2V) = {worst_ratio:.6}"),
    );
}

#[test]
fn criterion_05_bits_and_ratio() {
    let model = synthetic_model(2, 512, DEFAULT_STD, 5).unwrap();
    let total: usize = model.tensors.values().map(|t| t.element_count()).sum();
    let mut opts = CompressOptions::new(SearchSpace::new(vec![0.1], vec![1600], vec![3]).unwrap());
    opts.policy.min_elements = 4096;
    let out = compress_model(&model, &opts).unwrap();
    let eligible: usize = out
        .report
        .tensors
        .iter()
        .filter(|t| t.kind == EntryKind::Compressed)
        .map(|t| t.shape.iter().product::<usize>())
        .sum();
    let share = eligible as f64 / total as f64;
    let bits = bits_for_bound(4 * 1600);
    let per_param_ok = out
        .report
        .tensors
        .iter()
        .filter(|t| t.kind == EntryKind::Compressed)
        .all(|t| t.params.unwrap().bit_width == 13 && t.bits_per_param == 6.5);
    let pairwise = 64.0 / bits as f64;
    let ratio = out.report.totals.ratio;
    check(
        5,
        "bits/param and container ratio",
        bits == 13 && per_param_ok && share >= 0.95 && (4.3..=4.92).contains(&ratio),
        format!(
            "{bits}-bit codes, 6.5 bits/param, pairwise {pairwise:.3}x, {:.2}% eligible, container ratio {ratio:.4}x",
            share * 100.0
        ),
    );
}

#[test]
fn criterion_06_mae_target() {
    let model = synthetic_model(2, 768, DEFAULT_STD, 6).unwrap();
    let params: usize = model.tensors.values().map(|t| t.element_count()).sum();
    let preset = find_preset("sam-b").unwrap();
    let start = Instant::now();
    let out = compress_model(&model, &CompressOptions::new(preset.space)).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let worst = out.report.tensors.iter().filter_map(|t| t.mae).fold(0.0, f64::max);
    check(
        6,
        "MAE target (sam-b preset)",
        params >= 10_000_000 && worst <= 2.5e-3 && secs < 60.0,
        format!(
            "{params} params, {} tensors searched, worst MAE {worst:.3e} (reference {:.1e}), {secs:.2} s",
            out.report.compressed_tensors,
            preset.reference_mae.unwrap()
        ),
    );
}

#[test]
fn criterion_07_fused_equivalence() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    let mut nondeterministic = 0usize;
    for _ in 0..200 {
        let (m, k, n) = (rng.random_range(1..48), rng.random_range(1..96), rng.random_range(1..96));
        let cfg = BlockConfig::new(rng.random_range(1..24), 2 * rng.random_range(1..12), rng.random_range(1..24)).unwrap();
        let w = common::gaussian(k, n, 0.02, &mut rng);
        let a = common::gaussian(m, k, 1.0, &mut rng);
        let (codes, aux) = birkhoff::codec::compress_matrix(&w, 0.1, 1600, 3, CodebookKind::GridLattice).unwrap();
        let decoded = birkhoff::codec::decode_tensor(&codes, &aux, (k, n)).unwrap();
        let op = FusedOperand::new(codes, aux, (k, n)).unwrap();
        let reference = reference_gemm(&a, &decoded).unwrap();
        let runs: Vec<Matrix> = [1, 4, 8]
            .into_iter()
            .map(|workers| with_workers(workers, || fused_gemm(&a, &op, &cfg)).unwrap().unwrap())
            .collect();
        let as_f64: Vec<f64> = reference.as_slice().iter().map(|&v| v as f64).collect();
        worst = worst.max(common::rel_err(runs[0].as_slice(), &as_f64));
        worst = worst.max(common::rel_err(runs[0].as_slice(), &common::gemm_f64(&a, &decoded)));
        if runs.iter().any(|r| r.as_slice().iter().zip(runs[0].as_slice()).any(|(x, y)| x.to_bits() != y.to_bits())) {
            nondeterministic += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        7,
        "fused GEMM equivalence",
        worst <= 1e-5 && nondeterministic == 0 && secs < 60.0,
        format!("200 cases, max rel err {worst:.2e}, {nondeterministic} cases differing across 1/4/8 workers, {secs:.2} s"),
    );
}

#[test]
fn criterion_08_search_monotonicity() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let ls = [0.02, 0.05, 0.1, 0.2];
    let us = [16u32, 64, 100, 400, 1600];
    let mut violations = 0usize;
    let mut checks = 0usize;
    for _ in 0..50 {
        let w = common::gaussian(rng.random_range(4..24), rng.random_range(4..24), 0.02, &mut rng);
        let pick = |rng: &mut ChaCha8Rng, n: usize| -> Vec<usize> {
            let mut idx: Vec<usize> = (0..n).filter(|_| rng.random_bool(0.5)).collect();
            if idx.is_empty() {
                idx.push(rng.random_range(0..n));
            }
            idx
        };
        let base_l = pick(&mut rng, ls.len());
        let base_u = pick(&mut rng, us.len());
        let base_m = pick(&mut rng, 3);
        let space = |l: &[usize], u: &[usize], m: &[usize]| {
            SearchSpace::new(
                l.iter().map(|&i| ls[i]).collect(),
                u.iter().map(|&i| us[i]).collect(),
                m.iter().map(|&i| i as u32 + 1).collect(),
            )
            .unwrap()
        };
        let base = grid_search(&w, &space(&base_l, &base_u, &base_m)).unwrap().achieved_mae;
        let all_l: Vec<usize> = (0..ls.len()).collect();
        let all_u: Vec<usize> = (0..us.len()).collect();
        let all_m: Vec<usize> = (0..3).collect();
        for sup in [
            space(&all_l, &base_u, &base_m),
            space(&base_l, &all_u, &base_m),
            space(&base_l, &base_u, &all_m),
            space(&all_l, &all_u, &all_m),
        ] {
            checks += 1;
            if grid_search(&w, &sup).unwrap().achieved_mae > base {
                violations += 1;
            }
        }
    }
    check(
        8,
        "grid-search monotonicity",
        violations == 0,
        format!("50 tensors, {checks} superset comparisons, {violations} violations"),
    );
}

#[test]
fn criterion_09_container_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut model = TensorMap::default();
    let mut add = |name: &str, dtype: Dtype, shape: Vec<usize>, rng: &mut ChaCha8Rng| {
        let n: usize = shape.iter().product();
        let values = common::gaussian(1, n, 0.02, rng);
        model.insert(name, RawTensor::encode(dtype, shape, values.as_slice()).unwrap());
    };
    add("encoder.attn.qkv.weight", Dtype::F32, vec![192, 64], &mut rng);
    add("encoder.mlp.fc1.weight", Dtype::F16, vec![128, 77], &mut rng);
    add("encoder.mlp.fc2.weight", Dtype::BF16, vec![77, 128], &mut rng);
    add("encoder.mlp.fc1.bias", Dtype::F32, vec![128], &mut rng);
    add("decoder.tiny.weight", Dtype::F32, vec![8, 8], &mut rng);
    add("decoder.conv.weight", Dtype::F32, vec![4, 4, 3, 3], &mut rng);
    model.insert(
        "decoder.position_ids",
        RawTensor { dtype: Dtype::Other("I64".into()), shape: vec![5], data: (0..5i64).flat_map(i64::to_le_bytes).collect() },
    );
    model.metadata.insert("source".into(), "fixture".into());
    let original_path = dir.path().join("model.safetensors");
    emit_safetensors(&model, &original_path).unwrap();

    let original = ingest_safetensors(&original_path).unwrap();
    let out = compress_model(&original, &CompressOptions::new(find_preset("sam-b").unwrap().space)).unwrap();
    let bhc = dir.path().join("model.bhc");
    std::fs::write(&bhc, &out.bytes).unwrap();
    let (container, _) = read_container(&bhc).unwrap();
    let restored_path = dir.path().join("restored.safetensors");
    emit_safetensors(&decompress_model(&container).unwrap(), &restored_path).unwrap();
    let restored = ingest_safetensors(&restored_path).unwrap();

    let mut problems = Vec::new();
    let mut mae_checked = 0;
    for report in &out.report.tensors {
        let a = &original.tensors[&report.name];
        let b = &restored.tensors[&report.name];
        if a.shape != b.shape || a.dtype != b.dtype {
            problems.push(format!("{}: shape/dtype changed", report.name));
        }
        match report.kind {
            EntryKind::PassThrough if a.data != b.data => problems.push(format!("{}: bytes changed", report.name)),
            EntryKind::Compressed => {
                let recomputed = common::mae(&a.to_f32().unwrap(), &b.to_f32().unwrap());
                if recomputed.to_bits() != report.mae.unwrap().to_bits() {
                    problems.push(format!("{}: MAE {recomputed:e} vs reported {:e}", report.name, report.mae.unwrap()));
                }
                mae_checked += 1;
            }
            _ => {}
        }
    }
    if restored.metadata != original.metadata {
        problems.push("metadata changed".into());
    }
    check(
        9,
        "container round-trip",
        problems.is_empty() && mae_checked == 3,
        format!(
            "{} tensors ({mae_checked} compressed, dtypes F32/F16/BF16), problems: {problems:?}",
            out.report.tensors.len()
        ),
    );
}

#[test]
fn criterion_10_fused_overhead_soft() {
    let mut case = BenchCase::new("1024^3", (1024, 1024, 1024));
    case.repeats = 3;
    let report = run_suite(&[case]).unwrap();
    let dense = report.row("1024^3", Strategy::Dense).unwrap();
    let fused = report.row("1024^3", Strategy::Fused).unwrap();
    let ratio = fused.median_ms / dense.median_ms;
    // reported only: timing depends on the host
    verdict(
        10,
        "fused overhead (soft)",
        ratio <= 3.0,
        format!(
            "fused {:.1} ms vs dense {:.1} ms median, {ratio:.2}x (budget 3x), {} workers, {}",
            fused.median_ms,
            dense.median_ms,
            report.workers,
            report.machine
        ),
    );
    assert!(report.cases[0].verified);
}
