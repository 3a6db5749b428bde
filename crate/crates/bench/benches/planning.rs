use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use std::hint::black_box;

use offroad_core::mapping::{CellChange, CellState, GridUpdate, OccupancyGrid};
use offroad_core::planning::{
    dstar_compute, dstar_init, dstar_update, hybrid_astar, HybridParams, UnknownPolicy,
};
use offroad_core::world::{VehicleParams, VehiclePose};

/// Open field with a staggered wall pattern; deterministic, no RNG needed.
fn field(n: usize) -> OccupancyGrid {
    let mut g = OccupancyGrid::new(n, n, 1.0);
    for y in 0..n {
        for x in 0..n {
            let wall = x % 20 == 10 && (y / 15) % 2 == (x / 20) % 2 && y % 15 != 0;
            g.set(
                x,
                y,
                if wall {
                    CellState::Occupied
                } else {
                    CellState::Free
                },
            );
        }
    }
    g
}

/// A short wall appearing across the current path, as one perception frame would report.
fn blocking_update(g: &OccupancyGrid, n: usize) -> GridUpdate {
    let changed = (n / 2 - 4..n / 2 + 4)
        .map(|y| CellChange {
            cell: (n / 2, y),
            old: g.get(n / 2, y),
            new: CellState::Occupied,
        })
        .collect();
    GridUpdate {
        frame_id: 1,
        changed,
    }
}

fn dstar(c: &mut Criterion) {
    let n = 200;
    let grid = field(n);
    let (start, goal) = ((2, n / 2), (n - 3, n / 2));
    let update = blocking_update(&grid, n);
    let mut after = grid.clone();
    for ch in &update.changed {
        after.set(ch.cell.0, ch.cell.1, ch.new);
    }
    let mut planned = dstar_init(&grid, start, goal, UnknownPolicy::Free).unwrap();
    dstar_compute(&mut planned).unwrap();

    let mut group = c.benchmark_group("dstar_200x200_replan");
    group.bench_function("incremental", |b| {
        b.iter_batched(
            || planned.clone(),
            |mut st| {
                dstar_update(&mut st, &update, (3, n / 2)).unwrap();
                black_box(dstar_compute(&mut st).unwrap().cost)
            },
            BatchSize::LargeInput,
        )
    });
    group.bench_function("from_scratch", |b| {
        b.iter(|| {
            let mut st = dstar_init(&after, (3, n / 2), goal, UnknownPolicy::Free).unwrap();
            black_box(dstar_compute(&mut st).unwrap().cost)
        })
    });
    group.finish();
}

fn hybrid(c: &mut Criterion) {
    let mut grid = OccupancyGrid::new(40, 40, 1.0);
    for y in 0..40 {
        for x in 0..40 {
            let wall = x == 15 && (14..27).contains(&y);
            grid.set(
                x,
                y,
                if wall {
                    CellState::Occupied
                } else {
                    CellState::Free
                },
            );
        }
    }
    let vehicle = VehicleParams::default();
    let params = HybridParams::default();
    let prims = params.primitives(&vehicle, 1.0);
    let start = VehiclePose::new(5.5, 20.5, 0.0, 0.0);
    c.bench_function("hybrid_astar_40x40_around_wall", |b| {
        b.iter(|| {
            black_box(
                hybrid_astar(&grid, &start, (26, 20), &vehicle, &prims, &params)
                    .unwrap()
                    .trajectory
                    .len(),
            )
        })
    });
}

criterion_group!(benches, dstar, hybrid);
criterion_main!(benches);
