//! Two-level planning: D* Lite over the occupancy grid for the global route and
//! Hybrid A* over kinematic motion primitives for the local trajectory.

mod dstar;
mod hybrid;

use serde::{Deserialize, Serialize};

use crate::mapping::CellState;
use crate::world::VehiclePose;

pub use dstar::{dstar_compute, dstar_init, dstar_update, DStarState, GlobalPath, Key};
pub use hybrid::{
    default_primitives, hybrid_astar, hybrid_astar_oriented, HybridNode, HybridParams, LocalPlan,
    MotionPrimitive,
};

/// Grid cell `(x, y)`.
pub type Cell = (usize, usize);

/// How a planner reads cells that were never observed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnknownPolicy {
    Free,
    Occupied,
}

impl UnknownPolicy {
    pub fn blocks(self, state: CellState) -> bool {
        match state {
            CellState::Free => false,
            CellState::Occupied => true,
            CellState::Unknown => self == UnknownPolicy::Occupied,
        }
    }
}

/// Pose sequence produced by the local planner.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub poses: Vec<VehiclePose>,
    pub total_cost: f64,
}

impl Trajectory {
    pub fn from_poses(poses: Vec<VehiclePose>) -> Trajectory {
        let total_cost = poses
            .windows(2)
            .map(|w| (w[1].x - w[0].x).hypot(w[1].y - w[0].y))
            .sum();
        Trajectory { poses, total_cost }
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }
}

/// Per-invocation planner record for regression diffs.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PlannerDebug {
    pub expanded_count: usize,
    pub path: Vec<Cell>,
    pub cost: Option<f64>,
    pub queue_peak: usize,
}

/// Farthest waypoint reachable along the path from the waypoint nearest the
/// pose without leaving `window_radius`; the nearest waypoint if even that one
/// lies outside.
pub fn select_local_goal(
    global_path: &[Cell],
    cell_size: f64,
    pose: &VehiclePose,
    window_radius: f64,
) -> Option<Cell> {
    let center = |c: &Cell| {
        (
            (c.0 as f64 + 0.5) * cell_size,
            (c.1 as f64 + 0.5) * cell_size,
        )
    };
    let dist = |c: &Cell| {
        let (x, y) = center(c);
        pose.distance_to(x, y)
    };
    let (nearest, nearest_d) = global_path
        .iter()
        .enumerate()
        .map(|(i, c)| (i, dist(c)))
        .min_by(|a, b| a.1.total_cmp(&b.1))?;
    if nearest_d > window_radius {
        return Some(global_path[nearest]);
    }
    let mut last = nearest;
    for (i, c) in global_path.iter().enumerate().skip(nearest + 1) {
        if dist(c) > window_radius {
            break;
        }
        last = i;
    }
    Some(global_path[last])
}
