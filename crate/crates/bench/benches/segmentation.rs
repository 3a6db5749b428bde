use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use offroad_core::harness::timing_analog_frames;
use offroad_core::segmentation::{segment_patch, segment_patch_exhaustive, SegmentationParams};

/// Point-prompted vs exhaustive extraction on frames of increasing component count.
fn strategies(c: &mut Criterion) {
    let params = SegmentationParams::default();
    let mut group = c.benchmark_group("segmentation");
    for patch in timing_analog_frames(1) {
        let label = patch.frame_id;
        group.bench_with_input(BenchmarkId::new("point_prompted", label), &patch, |b, p| {
            b.iter(|| black_box(segment_patch(p, &params).unwrap().len()))
        });
        group.bench_with_input(BenchmarkId::new("exhaustive", label), &patch, |b, p| {
            b.iter(|| black_box(segment_patch_exhaustive(p, &params).unwrap().len()))
        });
    }
    group.finish();
}

criterion_group!(benches, strategies);
criterion_main!(benches);
