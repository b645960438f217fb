//! Peak heap use of the fused kernel, measured with a counting allocator.
//! Kept in its own test binary so no other test allocates concurrently.

use std::alloc::{GlobalAlloc, Layout, System};
use std::sync::atomic::{AtomicUsize, Ordering};

use birkhoff::codec::{compress_matrix, CodebookKind};
use birkhoff::hyperlinear::{fused_gemm, with_workers, BlockConfig, FusedOperand};
use birkhoff::Matrix;

struct Counting;

static CURRENT: AtomicUsize = AtomicUsize::new(0);
static PEAK: AtomicUsize = AtomicUsize::new(0);

unsafe impl GlobalAlloc for Counting {
    unsafe fn alloc(&self, layout: Layout) -> *mut u8 {
        let p = unsafe { System.alloc(layout) };
        if !p.is_null() {
            let now = CURRENT.fetch_add(layout.size(), Ordering::SeqCst) + layout.size();
            PEAK.fetch_max(now, Ordering::SeqCst);
        }
        p
    }

    unsafe fn dealloc(&self, ptr: *mut u8, layout: Layout) {
        unsafe { System.dealloc(ptr, layout) };
        CURRENT.fetch_sub(layout.size(), Ordering::SeqCst);
    }
}

#[global_allocator]
static GLOBAL: Counting = Counting;

/// Heap growth above the starting level while `f` runs, minus `keep` bytes
/// the result legitimately holds.
fn peak_extra<T>(keep: usize, f: impl FnOnce() -> T) -> (usize, T) {
    let base = CURRENT.load(Ordering::SeqCst);
    PEAK.store(base, Ordering::SeqCst);
    let out = f();
    (PEAK.load(Ordering::SeqCst) - base - keep, out)
}

fn weights(k: usize, n: usize) -> Matrix {
    Matrix::from_fn(k, n, |r, c| ((r * 7919 + c * 104_729) % 1000) as f32 * 4e-5 - 0.02)
}

#[test]
fn fused_scratch_does_not_grow_with_the_weight() {
    let cfg = BlockConfig::default();
    let m = 8;
    let mut extras = Vec::new();
    for (k, n) in [(128, 128), (1024, 2048)] {
        let w = weights(k, n);
        let (codes, aux) = compress_matrix(&w, 0.1, 1600, 3, CodebookKind::GridLattice).unwrap();
        drop(w);
        let op = FusedOperand::new(codes, aux, (k, n)).unwrap();
        let a = Matrix::from_fn(m, k, |r, c| ((r + c) % 5) as f32 - 2.0);
        let output = m * n * 4;
        let extra = with_workers(1, || peak_extra(output, || fused_gemm(&a, &op, &cfg).unwrap()).0).unwrap();
        let dense_weight = k * n * 4;
        println!("K={k} N={n}: {extra} bytes beyond output (weight would be {dense_weight})");
        assert!(extra <= cfg.scratch_bytes() + 16 * 1024, "{extra} bytes of scratch");
        assert!(extra * 64 < dense_weight || k == 128);
        extras.push(extra);
    }
    assert!(extras[1] <= extras[0] + 16 * 1024, "scratch grew with the weight: {extras:?}");
}
