//! Hybrid A* over forward-only constant-steering arcs.

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, HashSet};
use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use super::{Cell, PlannerDebug, Trajectory, UnknownPolicy};
use crate::error::{Error, Result};
use crate::mapping::OccupancyGrid;
use crate::world::{wrap_angle, VehicleParams, VehiclePose};

/// Constant-steering forward arc.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MotionPrimitive {
    pub steering: f64,
    /// Meters.
    pub arc_length: f64,
}

impl MotionPrimitive {
    /// Pose after travelling `dist` along the arc from `(x, y, theta)`.
    fn advance(&self, x: f64, y: f64, theta: f64, dist: f64, wheelbase: f64) -> (f64, f64, f64) {
        let curvature = self.steering.tan() / wheelbase;
        if curvature.abs() < 1e-12 {
            return (x + dist * theta.cos(), y + dist * theta.sin(), theta);
        }
        let end = theta + dist * curvature;
        let r = 1.0 / curvature;
        (
            x + r * (end.sin() - theta.sin()),
            y - r * (end.cos() - theta.cos()),
            end,
        )
    }
}

/// `{-δmax, -δmax/2, 0, δmax/2, δmax}` at the given arc length.
pub fn default_primitives(params: &VehicleParams, arc_length: f64) -> Vec<MotionPrimitive> {
    let d = params.delta_max;
    [-d, -d / 2.0, 0.0, d / 2.0, d]
        .into_iter()
        .map(|steering| MotionPrimitive {
            steering,
            arc_length,
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HybridParams {
    pub theta_bins: usize,
    /// Primitive length in grid cells.
    pub arc_length_cells: f64,
    /// Multiplies `arc_length · |Δsteering|`.
    pub steer_penalty: f64,
    pub max_expansions: usize,
    /// Collision sampling step along a primitive, in cells.
    pub collision_step_cells: f64,
    /// Clearance kept from blocked cells, meters.
    pub inflation_radius: f64,
    /// Search confined to this radius around the start, in cells.
    pub window_radius_cells: f64,
    pub goal_tolerance_cells: f64,
    /// Allowed heading error at the goal when a goal heading is given, radians.
    pub goal_heading_tolerance: f64,
    pub unknown: UnknownPolicy,
}

impl Default for HybridParams {
    fn default() -> Self {
        HybridParams {
            theta_bins: 72,
            arc_length_cells: 1.5,
            steer_penalty: 0.1,
            max_expansions: 50_000,
            collision_step_cells: 0.25,
            inflation_radius: 0.5,
            window_radius_cells: 40.0,
            goal_tolerance_cells: 1.0,
            goal_heading_tolerance: std::f64::consts::FRAC_PI_4,
            unknown: UnknownPolicy::Occupied,
        }
    }
}

impl HybridParams {
    pub fn primitives(&self, vehicle: &VehicleParams, cell_size: f64) -> Vec<MotionPrimitive> {
        default_primitives(vehicle, self.arc_length_cells * cell_size)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HybridNode {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub bucket: (i64, i64, usize),
    pub g_cost: f64,
    pub f_cost: f64,
    steering: f64,
    /// Length of the primitive leading here from the parent.
    arc_length: f64,
    parent: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LocalPlan {
    pub trajectory: Trajectory,
    pub debug: PlannerDebug,
}

#[derive(Clone, Copy)]
struct Open {
    f: f64,
    seq: u64,
    node: usize,
}

impl PartialEq for Open {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}
impl Eq for Open {}
impl PartialOrd for Open {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Open {
    fn cmp(&self, o: &Self) -> Ordering {
        self.f.total_cmp(&o.f).then(self.seq.cmp(&o.seq))
    }
}

struct Collision<'a> {
    grid: &'a OccupancyGrid,
    policy: UnknownPolicy,
    radius: f64,
}

impl Collision<'_> {
    /// Distance from `(x, y)` to the nearest blocked or out-of-grid cell,
    /// capped at `radius`; zero inside a blocked cell.
    fn clearance(&self, x: f64, y: f64) -> f64 {
        let s = self.grid.s;
        let r = self.radius;
        let (cx0, cy0) = (((x - r) / s).floor() as i64, ((y - r) / s).floor() as i64);
        let (cx1, cy1) = (((x + r) / s).floor() as i64, ((y + r) / s).floor() as i64);
        let mut best = r * r;
        for cy in cy0..=cy1 {
            for cx in cx0..=cx1 {
                // Distance from the point to the cell square.
                let dx = (cx as f64 * s - x).max(0.0).max(x - (cx + 1) as f64 * s);
                let dy = (cy as f64 * s - y).max(0.0).max(y - (cy + 1) as f64 * s);
                let d2 = dx * dx + dy * dy;
                if d2 >= best {
                    continue;
                }
                if !self.grid.in_bounds(cx, cy)
                    || self.policy.blocks(self.grid.get(cx as usize, cy as usize))
                {
                    best = d2;
                }
            }
        }
        best.sqrt()
    }
}

fn theta_bin(theta: f64, bins: usize) -> usize {
    let t = (wrap_angle(theta) + PI) / TAU;
    ((t * bins as f64).floor() as usize) % bins
}

/// Lowest-f expansion over `(cell, heading-bin)` buckets, each expanded at most
/// once. Cost is arc length plus `steer_penalty · arc_length · |Δsteering|`;
/// the heuristic is the Euclidean distance to the goal cell center.
pub fn hybrid_astar(
    grid: &OccupancyGrid,
    start: &VehiclePose,
    goal: Cell,
    vehicle: &VehicleParams,
    primitives: &[MotionPrimitive],
    params: &HybridParams,
) -> Result<LocalPlan> {
    hybrid_astar_oriented(grid, start, goal, None, vehicle, primitives, params)
}

/// As [`hybrid_astar`], additionally requiring the final heading to lie
/// within `goal_heading_tolerance` of `goal_heading` when one is given.
pub fn hybrid_astar_oriented(
    grid: &OccupancyGrid,
    start: &VehiclePose,
    goal: Cell,
    goal_heading: Option<f64>,
    vehicle: &VehicleParams,
    primitives: &[MotionPrimitive],
    params: &HybridParams,
) -> Result<LocalPlan> {
    let s = grid.s;
    let start_cell = grid.voxelize(start.x, start.y)?;
    if params.unknown.blocks(grid.get(start_cell.0, start_cell.1)) {
        return Err(Error::PlannerInit(format!(
            "start cell {start_cell:?} is not free"
        )));
    }
    let (gx, gy) = grid.cell_center(goal.0, goal.1);
    let tolerance = params.goal_tolerance_cells * s;
    let window = params.window_radius_cells * s;
    let collision = Collision {
        grid,
        policy: params.unknown,
        radius: params.inflation_radius,
    };
    // A start inside the inflation band may not get closer to an obstacle
    // than it already is, which lets it drive out of the band.
    let required = collision
        .clearance(start.x, start.y)
        .min(params.inflation_radius)
        .max(f64::MIN_POSITIVE);
    let bucket = |x: f64, y: f64, th: f64| {
        (
            (x / s).floor() as i64,
            (y / s).floor() as i64,
            theta_bin(th, params.theta_bins),
        )
    };

    let mut nodes = vec![HybridNode {
        x: start.x,
        y: start.y,
        theta: start.theta,
        bucket: bucket(start.x, start.y, start.theta),
        g_cost: 0.0,
        f_cost: (start.x - gx).hypot(start.y - gy),
        steering: 0.0,
        arc_length: 0.0,
        parent: None,
    }];
    let mut open = BinaryHeap::from([Reverse(Open {
        f: nodes[0].f_cost,
        seq: 0,
        node: 0,
    })]);
    let mut closed: HashSet<(i64, i64, usize)> = HashSet::new();
    let mut seq = 0u64;
    let mut expanded = 0usize;
    let mut queue_peak = 1usize;

    while let Some(Reverse(Open { node, .. })) = open.pop() {
        let cur = nodes[node];
        let aligned = goal_heading
            .is_none_or(|h| wrap_angle(cur.theta - h).abs() <= params.goal_heading_tolerance);
        if aligned && (cur.x - gx).hypot(cur.y - gy) <= tolerance {
            let trajectory = reconstruct(
                &nodes,
                node,
                params.collision_step_cells * s,
                vehicle.wheelbase,
            );
            let mut path: Vec<Cell> = trajectory
                .poses
                .iter()
                .map(|p| grid.voxelize(p.x, p.y).unwrap_or(start_cell))
                .collect();
            path.dedup();
            return Ok(LocalPlan {
                trajectory,
                debug: PlannerDebug {
                    expanded_count: expanded,
                    path,
                    cost: Some(cur.g_cost),
                    queue_peak,
                },
            });
        }
        if !closed.insert(cur.bucket) {
            continue;
        }
        expanded += 1;
        if expanded > params.max_expansions {
            break;
        }
        for prim in primitives {
            let samples = (prim.arc_length / (params.collision_step_cells * s))
                .ceil()
                .max(1.0) as usize;
            let mut free = true;
            for k in 1..=samples {
                let d = prim.arc_length * k as f64 / samples as f64;
                let (x, y, _) = prim.advance(cur.x, cur.y, cur.theta, d, vehicle.wheelbase);
                let from_start = (x - start.x).hypot(y - start.y);
                if collision.clearance(x, y) < required || from_start > window {
                    free = false;
                    break;
                }
            }
            if !free {
                continue;
            }
            let (x, y, theta) =
                prim.advance(cur.x, cur.y, cur.theta, prim.arc_length, vehicle.wheelbase);
            let b = bucket(x, y, theta);
            if closed.contains(&b) {
                continue;
            }
            let g_cost = cur.g_cost
                + prim.arc_length
                + params.steer_penalty * prim.arc_length * (prim.steering - cur.steering).abs();
            let f_cost = g_cost + (x - gx).hypot(y - gy);
            nodes.push(HybridNode {
                x,
                y,
                theta: wrap_angle(theta),
                bucket: b,
                g_cost,
                f_cost,
                steering: prim.steering,
                arc_length: prim.arc_length,
                parent: Some(node),
            });
            seq += 1;
            open.push(Reverse(Open {
                f: f_cost,
                seq,
                node: nodes.len() - 1,
            }));
            queue_peak = queue_peak.max(open.len());
        }
    }
    Err(Error::NoPath)
}

/// Poses along the chain ending at `last`, sampled every `step` along each
/// primitive so that segment directions follow the arcs' headings.
fn reconstruct(nodes: &[HybridNode], last: usize, step: f64, wheelbase: f64) -> Trajectory {
    let mut chain = Vec::new();
    let mut cur = Some(last);
    while let Some(i) = cur {
        chain.push(i);
        cur = nodes[i].parent;
    }
    chain.reverse();
    let first = &nodes[chain[0]];
    let mut poses = vec![VehiclePose::new(first.x, first.y, first.theta, 0.0)];
    for pair in chain.windows(2) {
        let (from, to) = (&nodes[pair[0]], &nodes[pair[1]]);
        let prim = MotionPrimitive {
            steering: to.steering,
            arc_length: to.arc_length,
        };
        let samples = (to.arc_length / step).ceil().max(1.0) as usize;
        for k in 1..samples {
            let (x, y, theta) = prim.advance(
                from.x,
                from.y,
                from.theta,
                to.arc_length * k as f64 / samples as f64,
                wheelbase,
            );
            poses.push(VehiclePose::new(x, y, wrap_angle(theta), 0.0));
        }
        poses.push(VehiclePose::new(to.x, to.y, to.theta, 0.0));
    }
    Trajectory {
        poses,
        total_cost: nodes[last].g_cost,
    }
}
