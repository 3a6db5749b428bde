//! Acceptance criteria for the navigation stack. Runs without the libtest
//! harness so that every criterion prints exactly one PASS/FAIL line, with the
//! measured numbers, on every run. Exits non-zero when any criterion fails.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use offroad_core::control::ControlCommand;
use offroad_core::control::{
    pid_accel, stanley_steer, step_controller, ControllerGains, TrackingState,
};
use offroad_core::drivability::{
    score_selection, FalsePositiveScope, GroundTruthOracle, NoiseParams, NoisyOracle, Oracle,
    PromptSpec, RubricScore,
};
use offroad_core::harness::{
    eval_suite, reachability_suite, run_scenario, sample_frames, timing_analog_frames,
    timing_compare, EvalReport, ScenarioConfig, StoredFrame, TruthSource,
};
use offroad_core::mapping::{voxelize_point, CellChange, CellState, GridUpdate, OccupancyGrid};
use offroad_core::mask::Mask;
use offroad_core::planning::{
    dstar_compute, dstar_init, dstar_update, hybrid_astar, Cell, HybridParams, UnknownPolicy,
};
use offroad_core::segmentation::{
    annotate, centroid, filter_by_area, merge_masks, FrameSource, SegmentationParams,
};
use offroad_core::world::{
    generate_world, step_vehicle, wrap_angle, VehicleParams, VehiclePose, WorldSpec,
};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

type Criterion = fn() -> Result<Verdict, String>;

fn main() {
    let criteria: [(&str, Criterion); 10] = [
        ("dstar_optimality", dstar_optimality),
        (
            "dstar_incremental_equivalence",
            dstar_incremental_equivalence,
        ),
        ("hybrid_feasibility", hybrid_feasibility),
        ("stanley_pid", stanley_pid),
        ("merge_centroid_area", merge_centroid_area),
        ("voxelize", voxelize),
        ("closed_loop_reachability", closed_loop_reachability),
        ("evaluation_suite", evaluation_suite),
        ("oracle_query_economy", oracle_query_economy),
        ("timing_trend", timing_trend),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let t = Instant::now();
        let v = run().unwrap_or_else(|e| verdict(false, format!("error: {e}")));
        if !v.pass {
            failed += 1;
        }
        println!(
            "{} {name}: {} ({:.2} s)",
            if v.pass { "PASS" } else { "FAIL" },
            v.detail,
            t.elapsed().as_secs_f64()
        );
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

// ---------------------------------------------------------------- planning

fn random_grid(rng: &mut ChaCha8Rng, n: usize, occupied: f64) -> OccupancyGrid {
    let mut g = OccupancyGrid::new(n, n, 1.0);
    for y in 0..n {
        for x in 0..n {
            let s = if rng.random_bool(occupied) {
                CellState::Occupied
            } else {
                CellState::Free
            };
            g.set(x, y, s);
        }
    }
    g
}

fn random_free_cell(rng: &mut ChaCha8Rng, g: &OccupancyGrid) -> Cell {
    loop {
        let c = (rng.random_range(0..g.n_x), rng.random_range(0..g.n_y));
        if g.get(c.0, c.1) == CellState::Free {
            return c;
        }
    }
}

/// Dijkstra on the 8-connected grid: unit / √2 steps between two free cells.
fn dijkstra(g: &OccupancyGrid, start: Cell, goal: Cell) -> Option<f64> {
    let blocked = |x: usize, y: usize| g.get(x, y) == CellState::Occupied;
    if blocked(start.0, start.1) || blocked(goal.0, goal.1) {
        return None;
    }
    let idx = |c: Cell| c.1 * g.n_x + c.0;
    let mut dist = vec![f64::INFINITY; g.n_x * g.n_y];
    // Costs are sums of 1 and √2 with at most a few thousand terms; ordering on
    // the raw bits of a non-negative f64 is ordering on its value.
    let mut heap = BinaryHeap::new();
    dist[idx(start)] = 0.0;
    heap.push(Reverse((0f64.to_bits(), start)));
    while let Some(Reverse((bits, c))) = heap.pop() {
        let d = f64::from_bits(bits);
        if d > dist[idx(c)] {
            continue;
        }
        if c == goal {
            return Some(d);
        }
        for dy in -1i64..=1 {
            for dx in -1i64..=1 {
                if dx == 0 && dy == 0 {
                    continue;
                }
                let (nx, ny) = (c.0 as i64 + dx, c.1 as i64 + dy);
                if nx < 0 || ny < 0 || nx >= g.n_x as i64 || ny >= g.n_y as i64 {
                    continue;
                }
                let n = (nx as usize, ny as usize);
                if blocked(n.0, n.1) {
                    continue;
                }
                let step = if dx != 0 && dy != 0 {
                    std::f64::consts::SQRT_2
                } else {
                    1.0
                };
                let nd = d + step;
                if nd < dist[idx(n)] {
                    dist[idx(n)] = nd;
                    heap.push(Reverse((nd.to_bits(), n)));
                }
            }
        }
    }
    None
}

fn same_cost(a: Option<f64>, b: Option<f64>) -> bool {
    match (a, b) {
        (Some(x), Some(y)) => (x - y).abs() < 1e-9,
        (None, None) => true,
        _ => false,
    }
}

fn dstar_optimality() -> Result<Verdict, String> {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xD5);
    let (mut matched, mut reachable) = (0, 0);
    for _ in 0..100 {
        let g = random_grid(&mut rng, 30, 0.25);
        let (s, goal) = (
            random_free_cell(&mut rng, &g),
            random_free_cell(&mut rng, &g),
        );
        let mut st = dstar_init(&g, s, goal, UnknownPolicy::Free).map_err(|e| e.to_string())?;
        let got = dstar_compute(&mut st).ok().map(|p| p.cost);
        let want = dijkstra(&g, s, goal);
        reachable += want.is_some() as usize;
        matched += same_cost(got, want) as usize;
    }
    let secs = t.elapsed().as_secs_f64();
    Ok(verdict(
        matched == 100 && secs < 5.0,
        format!(
            "{matched}/100 grids match Dijkstra ({reachable} reachable) in {secs:.2} s (limit 5 s)"
        ),
    ))
}

fn dstar_incremental_equivalence() -> Result<Verdict, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x1EC);
    let n = 30;
    let mut matched = 0;
    for _ in 0..100 {
        let mut g = random_grid(&mut rng, n, 0.25);
        let goal = random_free_cell(&mut rng, &g);
        let mut start = random_free_cell(&mut rng, &g);
        let mut st = dstar_init(&g, start, goal, UnknownPolicy::Free).map_err(|e| e.to_string())?;
        let _ = dstar_compute(&mut st);
        for k in 0..50 {
            let c = (rng.random_range(0..n), rng.random_range(0..n));
            let mut changed = Vec::new();
            if c != goal {
                let old = g.get(c.0, c.1);
                let new = if old == CellState::Occupied {
                    CellState::Free
                } else {
                    CellState::Occupied
                };
                g.set(c.0, c.1, new);
                changed.push(CellChange { cell: c, old, new });
            }
            if k % 5 == 4 {
                start = random_free_cell(&mut rng, &g);
            }
            dstar_update(
                &mut st,
                &GridUpdate {
                    frame_id: k,
                    changed,
                },
                start,
            )
            .map_err(|e| e.to_string())?;
            let _ = dstar_compute(&mut st);
        }
        let incremental = dstar_compute(&mut st).ok().map(|p| p.cost);
        let scratch = dstar_init(&g, start, goal, UnknownPolicy::Free)
            .and_then(|mut s| dstar_compute(&mut s))
            .ok()
            .map(|p| p.cost);
        matched += (same_cost(incremental, scratch)
            && same_cost(scratch, dijkstra(&g, start, goal))) as usize;
    }
    Ok(verdict(matched == 100, format!("{matched}/100 sequences of 50 flips + start moves match from-scratch planning and Dijkstra")))
}

/// Distance from a point to the nearest occupied or off-grid cell square.
fn clearance(g: &OccupancyGrid, x: f64, y: f64) -> f64 {
    let mut best = f64::INFINITY;
    for cy in -1..=g.n_y as i64 {
        for cx in -1..=g.n_x as i64 {
            let inside = cx >= 0 && cy >= 0 && cx < g.n_x as i64 && cy < g.n_y as i64;
            if inside && g.get(cx as usize, cy as usize) != CellState::Occupied {
                continue;
            }
            let (x0, y0) = (cx as f64 * g.s, cy as f64 * g.s);
            let dx = (x0 - x).max(0.0).max(x - (x0 + g.s));
            let dy = (y0 - y).max(0.0).max(y - (y0 + g.s));
            best = best.min(dx.hypot(dy));
        }
    }
    best
}

fn hybrid_feasibility() -> Result<Verdict, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x4B);
    let vehicle = VehicleParams::default();
    let params = HybridParams::default();
    let prims = params.primitives(&vehicle, 1.0);
    let kappa_max = vehicle.delta_max.tan() / vehicle.wheelbase;
    let (mut planned, mut pairs, mut violations) = (0, 0, Vec::new());
    for inst in 0..50 {
        let n = 40;
        let mut g = OccupancyGrid::new(n, n, 1.0);
        for y in 0..n {
            for x in 0..n {
                g.set(x, y, CellState::Free);
            }
        }
        let start = VehiclePose::new(
            5.5,
            rng.random_range(12.0..28.0),
            rng.random_range(-0.6..0.6),
            0.0,
        );
        let goal: Cell = (rng.random_range(28..35), rng.random_range(8..32));
        // Boxes in the middle band, clear of the start and goal surroundings.
        for _ in 0..6 {
            let (bx, by) = (rng.random_range(12..24), rng.random_range(4..34));
            for y in by..(by + rng.random_range(2..5)).min(n) {
                for x in bx..bx + rng.random_range(2..5) {
                    g.set(x, y, CellState::Occupied);
                }
            }
        }
        let Ok(plan) = hybrid_astar(&g, &start, goal, &vehicle, &prims, &params) else {
            continue;
        };
        planned += 1;
        let poses = &plan.trajectory.poses;
        for p in poses {
            if clearance(&g, p.x, p.y) < params.inflation_radius {
                violations.push(format!(
                    "instance {inst}: pose ({:.2}, {:.2}) in collision",
                    p.x, p.y
                ));
            }
        }
        for w in poses.windows(2) {
            pairs += 1;
            let dtheta = wrap_angle(w[1].theta - w[0].theta);
            let chord = (w[1].x - w[0].x).hypot(w[1].y - w[0].y);
            // Arc length of the circular arc with this chord and turn.
            let arc = if dtheta.abs() < 1e-12 {
                chord
            } else {
                chord * (dtheta / 2.0) / (dtheta / 2.0).sin()
            };
            if dtheta.abs() > arc * kappa_max + 1e-9 {
                violations.push(format!(
                    "instance {inst}: |dθ| {:.4} over arc {:.4}",
                    dtheta.abs(),
                    arc
                ));
            }
            // Forward arc: the chord points along the mean heading.
            let dir = (w[1].y - w[0].y).atan2(w[1].x - w[0].x);
            if wrap_angle(dir - (w[0].theta + dtheta / 2.0)).abs() > 1e-6 {
                violations.push(format!("instance {inst}: chord off the arc"));
            }
        }
    }
    Ok(verdict(
        violations.is_empty() && planned == 50,
        format!(
            "{planned}/50 instances planned, {pairs} pose pairs checked, {} violations{}",
            violations.len(),
            violations
                .first()
                .map_or(String::new(), |v| format!(" (first: {v})"))
        ),
    ))
}

// ---------------------------------------------------------------- control

fn stanley_pid() -> Result<Verdict, String> {
    // Saturation fuzz, including extreme magnitudes.
    let mut rng = ChaCha8Rng::seed_from_u64(0x57);
    let mut sat_violations = 0;
    for i in 0..1_000_000u32 {
        let scale = if i % 10 == 0 { 1e12 } else { 10.0 };
        let psi = rng.random_range(-scale..scale);
        let e = rng.random_range(-scale..scale) * 100.0;
        let v = rng.random_range(0.0..50.0);
        let gains = ControllerGains {
            k: rng.random_range(0.01..10.0),
            v_eps: rng.random_range(0.01..1.0),
            ..ControllerGains::default()
        };
        let dmax = rng.random_range(0.05..1.5);
        let d = stanley_steer(psi, e, v, &gains, dmax);
        // Written so that a NaN steering angle counts as a violation.
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !(d.abs() <= dmax) {
            sat_violations += 1;
        }
    }

    // Straight-line convergence from 2 m to the left at 3 m/s.
    let gains = ControllerGains::default();
    let vehicle = VehicleParams::default();
    let dt = 0.05;
    let line = offroad_core::planning::Trajectory::from_poses(
        (0..=400)
            .map(|i| VehiclePose::new(i as f64, 0.0, 0.0, 0.0))
            .collect(),
    );
    let mut pose = VehiclePose::new(0.0, 2.0, 0.0, 3.0);
    let mut state = TrackingState::default();
    let mut reached = None;
    let mut cte_at_30 = f64::NAN;
    for k in 1..=(30.0 / dt) as usize {
        let (cmd, next) = step_controller(&pose, &line, 3.0, &state, &gains, &vehicle, dt)
            .map_err(|e| e.to_string())?;
        state = next;
        pose = step_vehicle(&pose, &cmd, dt, &vehicle).map_err(|e| e.to_string())?;
        let cte = pose.y;
        if cte.abs() < 0.05 && reached.is_none() {
            reached = Some(k as f64 * dt);
        }
        cte_at_30 = cte;
    }

    // Velocity step 0 → 3 m/s on a straight line; settled once |err| stays < 2 %.
    let v_ref = 3.0;
    let mut pose = VehiclePose::new(0.0, 0.0, 0.0, 0.0);
    let mut state = TrackingState::default();
    let mut settled_at = 0.0;
    let horizon = 40.0;
    for k in 1..=(horizon / dt) as usize {
        let (accel, next) = pid_accel(v_ref, pose.v, &state, &gains, &vehicle, dt);
        state = next;
        pose = step_vehicle(&pose, &ControlCommand { delta: 0.0, accel }, dt, &vehicle)
            .map_err(|e| e.to_string())?;
        if (v_ref - pose.v).abs() >= 0.02 * v_ref {
            settled_at = k as f64 * dt;
        }
    }

    let converged = reached.is_some_and(|t| t <= 30.0) && cte_at_30.abs() < 0.05;
    Ok(verdict(
        sat_violations == 0 && converged && settled_at <= 20.0,
        format!(
            "saturation violations {sat_violations}/1e6; CTE 2 m → <0.05 m at {} s (|CTE| at 30 s = {:.4}); PID within 2 % from {settled_at:.2} s (limit 20 s)",
            reached.map_or("never".to_string(), |t| format!("{t:.2}")),
            cte_at_30.abs()
        ),
    ))
}

// ---------------------------------------------------------------- segmentation

fn random_mask(rng: &mut ChaCha8Rng, w: usize, h: usize) -> Mask {
    let (x0, y0) = (rng.random_range(0..w - 2), rng.random_range(0..h - 2));
    let (x1, y1) = (rng.random_range(x0 + 1..w), rng.random_range(y0 + 1..h));
    let holes = rng.random_bool(0.5);
    Mask::from_fn(w, h, |x, y| {
        (x0..=x1).contains(&x) && (y0..=y1).contains(&y) && !(holes && (x * 7 + y * 3) % 5 == 0)
    })
}

fn count_pixels(m: &Mask) -> usize {
    let (w, h) = m.dims();
    (0..h)
        .flat_map(|y| (0..w).map(move |x| (x, y)))
        .filter(|&(x, y)| m.get(x, y))
        .count()
}

fn brute_iou(a: &Mask, b: &Mask) -> f64 {
    let (w, h) = a.dims();
    let (mut inter, mut union) = (0usize, 0usize);
    for y in 0..h {
        for x in 0..w {
            inter += (a.get(x, y) && b.get(x, y)) as usize;
            union += (a.get(x, y) || b.get(x, y)) as usize;
        }
    }
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

fn merge_centroid_area() -> Result<Verdict, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x3E);
    let (w, h) = (24, 24);
    let mut problems = Vec::new();
    for set in 0..1000 {
        let masks: Vec<Mask> = (0..rng.random_range(2..12))
            .map(|_| random_mask(&mut rng, w, h))
            .collect();
        let tau = rng.random_range(0.2..0.8);
        let mut union_in = Mask::new(w, h);
        for m in &masks {
            union_in.union_with(m).map_err(|e| e.to_string())?;
        }
        let merged = merge_masks(masks, tau).map_err(|e| e.to_string())?;
        for i in 0..merged.len() {
            for j in i + 1..merged.len() {
                let v = brute_iou(&merged[i], &merged[j]);
                if v >= tau {
                    problems.push(format!("set {set}: pair ({i},{j}) IoU {v:.3} ≥ {tau:.3}"));
                }
            }
        }
        let mut union_out = Mask::new(w, h);
        for m in &merged {
            union_out.union_with(m).map_err(|e| e.to_string())?;
        }
        if union_out != union_in {
            problems.push(format!("set {set}: merge changed the covered pixels"));
        }
        for m in &merged {
            let (mut sx, mut sy, mut n) = (0.0, 0.0, 0.0);
            for y in 0..h {
                for x in 0..w {
                    if m.get(x, y) {
                        sx += x as f64;
                        sy += y as f64;
                        n += 1.0;
                    }
                }
            }
            let got = centroid(m);
            let ok = match got {
                Some((cx, cy)) => {
                    n > 0.0 && (cx - sx / n).abs() < 1e-9 && (cy - sy / n).abs() < 1e-9
                }
                None => n == 0.0,
            };
            if !ok {
                problems.push(format!("set {set}: centroid {got:?} vs brute force"));
            }
        }
        let tau_area = rng.random_range(1..200);
        let expected: Vec<Mask> = merged
            .iter()
            .filter(|m| count_pixels(m) >= tau_area)
            .cloned()
            .collect();
        if filter_by_area(merged, tau_area) != expected {
            problems.push(format!(
                "set {set}: area filter at {tau_area} differs from the pixel count"
            ));
        }
    }
    Ok(verdict(
        problems.is_empty(),
        format!(
            "1000 mask sets: {} problems{}",
            problems.len(),
            problems
                .first()
                .map_or(String::new(), |p| format!(" (first: {p})"))
        ),
    ))
}

// ---------------------------------------------------------------- mapping

fn voxelize() -> Result<Verdict, String> {
    // Points are k/1024 and cell sizes a/b, so floor(x / s) is the exact
    // integer floor(k·b / (1024·a)).
    const SIZES: [(i128, i128); 6] = [(20, 1), (7, 1), (5, 2), (3, 4), (1, 2), (1, 1)];
    let mut rng = ChaCha8Rng::seed_from_u64(0x40);
    let mut mismatches = 0;
    for i in 0..1_000_000usize {
        let (a, b) = SIZES[i % SIZES.len()];
        let s = a as f64 / b as f64;
        let kx: i64 = rng.random_range(-12_000 * 1024..12_000 * 1024);
        let ky: i64 = rng.random_range(-12_000 * 1024..12_000 * 1024);
        let oracle = |k: i64| (k as i128 * b).div_euclid(1024 * a) as i64;
        let got = voxelize_point((kx as f64 / 1024.0, ky as f64 / 1024.0), s);
        if got != (oracle(kx), oracle(ky)) {
            mismatches += 1;
        }
    }
    let full = OccupancyGrid::full_scale();
    let corner = full
        .voxelize(11_999.0, 11_999.0)
        .map_err(|e| e.to_string())?;
    let dims = (full.n_x, full.n_y);
    Ok(verdict(
        mismatches == 0 && corner == (599, 599) && dims == (600, 600),
        format!("{mismatches}/1e6 mismatches vs exact floor; (11999, 11999) at s = 20 → {corner:?} on a {}×{} grid", dims.0, dims.1),
    ))
}

// ---------------------------------------------------------------- closed loop

fn load(name: &str) -> Result<ScenarioConfig, String> {
    ScenarioConfig::load(&configs_dir().join(name)).map_err(|e| e.to_string())
}

fn closed_loop_reachability() -> Result<Verdict, String> {
    let ab = load("reach_ab.toml")?;
    let world = ab.world.load().map_err(|e| e.to_string())?;
    let (ab_report, _) = reachability_suite(&ab, &world).map_err(|e| e.to_string())?;
    let hz = load("hazard.toml")?;
    let hz_world = hz.world.load().map_err(|e| e.to_string())?;
    let (hz_report, _) = reachability_suite(&hz, &hz_world).map_err(|e| e.to_string())?;
    let ab_ok = ab_report.routes.len() == 2
        && ab_report
            .routes
            .iter()
            .all(|r| r.runs == 5 && r.successes == 5);
    let h = &hz_report.routes[0];
    let hz_ok = h.runs == 10 && h.successes > 0 && h.successes < h.runs;
    let summary: Vec<String> = ab_report
        .routes
        .iter()
        .chain(&hz_report.routes)
        .map(|r| format!("{} {}/{}", r.route, r.successes, r.runs))
        .collect();
    Ok(verdict(
        ab_ok && hz_ok,
        format!(
            "{} (want 5/5, 5/5, and strictly between 0 and 10 of 10)",
            summary.join(", ")
        ),
    ))
}

fn eval_with(frames: &[StoredFrame], oracle: &mut dyn Oracle) -> Result<EvalReport, String> {
    eval_suite(
        frames,
        &HashMap::new(),
        TruthSource::Classes,
        oracle,
        None,
        &PromptSpec::default(),
        0.5,
    )
    .map_err(|e| e.to_string())
}

fn evaluation_suite() -> Result<Verdict, String> {
    let world = generate_world(11, &WorldSpec::default()).map_err(|e| e.to_string())?;
    let frames = sample_frames(&world, 200, 5, 40, &SegmentationParams::default())
        .map_err(|e| e.to_string())?;

    let perfect = eval_with(&frames, &mut GroundTruthOracle)?;
    let scored: Vec<_> = perfect.rows.iter().filter(|r| r.iou.is_some()).collect();
    let perfect_ok = perfect.miou == Some(1.0) && scored.iter().all(|r| r.rubric == 1.0);

    // Archetypes: 1 = trail (drivable), 2 = rock hill, 3 = sky.
    let masks = vec![
        Mask::from_fn(12, 4, |x, _| x < 6),
        Mask::from_fn(12, 4, |x, _| (6..9).contains(&x)),
        Mask::from_fn(12, 4, |x, _| x >= 9),
    ];
    let frame = annotate(masks, FrameSource::bare(12, 4)).map_err(|e| e.to_string())?;
    let archetypes = [
        score_selection(&frame, &[1], &[1], 0.5),
        score_selection(&frame, &[1, 2], &[1], 0.5),
        score_selection(&frame, &[1, 2, 3], &[1], 0.5),
    ];
    let archetypes_ok = archetypes == [RubricScore::One, RubricScore::Half, RubricScore::Zero];

    let mut sweep = Vec::new();
    for p in [0.0, 0.1, 0.2] {
        let mut oracle = NoisyOracle(NoiseParams {
            p_fp: p,
            p_fn: p,
            seed: 42,
            fp_scope: FalsePositiveScope::All,
        });
        sweep.push(
            eval_with(&frames, &mut oracle)?
                .miou
                .ok_or("no scored frames")?,
        );
    }
    let decreasing = sweep.windows(2).all(|w| w[1] < w[0]);
    Ok(verdict(
        perfect_ok && archetypes_ok && decreasing,
        format!(
            "perfect oracle mIoU {:?}, rubric 1 on {}/{} scored frames ({} without drivable truth); archetypes {:?}; mIoU at p = 0 / 0.1 / 0.2: {:.4} / {:.4} / {:.4}",
            perfect.miou,
            scored.iter().filter(|r| r.rubric == 1.0).count(),
            scored.len(),
            perfect.rows.len() - scored.len(),
            archetypes.map(|a| a.value()),
            sweep[0],
            sweep[1],
            sweep[2]
        ),
    ))
}

fn oracle_query_economy() -> Result<Verdict, String> {
    let cfg = load("static_corridor.toml")?;
    let world = cfg.world.load().map_err(|e| e.to_string())?;
    let log = run_scenario(&cfg, &world, &cfg.routes[0], cfg.seed).map_err(|e| e.to_string())?;
    let s = &log.summary;
    Ok(verdict(
        s.frames == 100 && s.oracle_queries <= 6,
        format!(
            "{} oracle queries over {} frames (limit 6 per 100)",
            s.oracle_queries, s.frames
        ),
    ))
}

fn timing_trend() -> Result<Verdict, String> {
    let table = timing_compare(&timing_analog_frames(1), &SegmentationParams::default(), 5)
        .map_err(|e| e.to_string())?;
    let ratios: Vec<String> = table
        .rows
        .iter()
        .map(|r| format!("{} comps {:.3}", r.components, r.ratio))
        .collect();
    Ok(verdict(
        table.rows.len() == 4 && table.rows.iter().all(|r| r.ratio < 1.0),
        format!("point/exhaustive time ratios: {}", ratios.join(", ")),
    ))
}
