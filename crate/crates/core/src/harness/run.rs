//! Closed-loop runner: sense → segment → oracle → map → plan → control → step.

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{Route, ScenarioConfig};
use crate::control::{step_controller, ControlCommand, TrackingState};
use crate::drivability::{query_with_contingency, render_query, Oracle, OracleContext};
use crate::error::{Error, Result};
use crate::mapping::{label_points, CellChange, CellState, GridUpdate, OccupancyGrid};
use crate::mask::Mask;
use crate::planning::{
    dstar_compute, dstar_init, dstar_update, hybrid_astar, hybrid_astar_oriented,
    select_local_goal, Cell, DStarState, GlobalPath, Trajectory,
};
use crate::segmentation::{segment_patch, track_masks, TrackState};
use crate::world::{
    neighbors4, step_vehicle, wrap_angle, Sensor, SensorPatch, TerrainWorld, VehiclePose,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Success,
    Timeout,
    Stuck,
    NoPath,
}

impl Outcome {
    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Success => "success",
            Outcome::Timeout => "timeout",
            Outcome::Stuck => "stuck",
            Outcome::NoPath => "no_path",
        }
    }
}

/// Something that happened during a perception/planning cycle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    Perception {
        frame_id: u64,
        masks: usize,
        tracked: bool,
    },
    OracleQuery {
        frame_id: u64,
        indices: Vec<usize>,
        calls: usize,
        fallback: bool,
    },
    OracleFailed {
        frame_id: u64,
        calls: usize,
        reason: String,
    },
    MapUpdate {
        frame_id: u64,
        changed: usize,
    },
    GlobalPlan {
        cost: f64,
        cells: usize,
        expanded: usize,
    },
    GlobalNoPath {
        reason: String,
    },
    LocalPlan {
        poses: usize,
        cost: f64,
        expanded: usize,
    },
    LocalFailed {
        reason: String,
    },
    Terminal {
        reason: String,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub v: f64,
    pub delta: f64,
    pub accel: f64,
    pub cte: Option<f64>,
    pub grid_frame_id: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub events: Vec<Event>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub route: String,
    pub seed: u64,
    pub outcome: Outcome,
    pub reason: Option<String>,
    pub elapsed_steps: usize,
    /// `elapsed_steps · dt`.
    pub sim_time: f64,
    /// Oracle queries issued (fresh selections after a lost track).
    pub oracle_queries: usize,
    /// Oracle calls including contingency retries.
    pub oracle_calls: usize,
    pub frames: usize,
    pub start: Cell,
    pub goal: Cell,
    pub final_pose: VehiclePose,
    pub global_path: Vec<Cell>,
    pub last_trajectory: Vec<[f64; 2]>,
}

/// Full record of one closed-loop run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub summary: RunSummary,
    pub steps: Vec<StepRecord>,
    pub grid: OccupancyGrid,
}

impl RunLog {
    /// One JSON object per step.
    pub fn steps_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for s in &self.steps {
            out.push_str(&serde_json::to_string(s)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn summary_csv(logs: &[&RunLog]) -> String {
        let mut out = String::from(
            "route,seed,outcome,elapsed_steps,sim_time,oracle_queries,oracle_calls,frames,reason\n",
        );
        for l in logs {
            let s = &l.summary;
            let _ = writeln!(
                out,
                "{},{},{},{},{:.2},{},{},{},{}",
                s.route,
                s.seed,
                s.outcome.as_str(),
                s.elapsed_steps,
                s.sim_time,
                s.oracle_queries,
                s.oracle_calls,
                s.frames,
                s.reason.as_deref().unwrap_or("").replace(',', ";")
            );
        }
        out
    }

    /// Writes `steps.jsonl`, `run.json` (summary + final grid) and `summary.csv`.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("steps.jsonl"), self.steps_jsonl()?)?;
        let head = serde_json::json!({ "summary": self.summary, "grid": self.grid });
        std::fs::write(dir.join("run.json"), serde_json::to_string_pretty(&head)?)?;
        std::fs::write(dir.join("summary.csv"), RunLog::summary_csv(&[self]))?;
        Ok(())
    }

    /// Inverse of [`RunLog::write_dir`].
    pub fn read_dir(dir: &Path) -> Result<RunLog> {
        #[derive(Deserialize)]
        struct Head {
            summary: RunSummary,
            grid: OccupancyGrid,
        }
        let fmt = |path: &Path, e: &dyn std::fmt::Display| Error::Format {
            path: path.display().to_string(),
            reason: e.to_string(),
        };
        let head_path = dir.join("run.json");
        let head: Head = serde_json::from_str(&std::fs::read_to_string(&head_path)?)
            .map_err(|e| fmt(&head_path, &e))?;
        let steps_path = dir.join("steps.jsonl");
        let steps = std::fs::read_to_string(&steps_path)?
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str(l).map_err(|e| fmt(&steps_path, &e)))
            .collect::<Result<Vec<StepRecord>>>()?;
        Ok(RunLog {
            summary: head.summary,
            steps,
            grid: head.grid,
        })
    }

    pub fn trace(&self) -> Vec<(f64, f64)> {
        self.steps.iter().map(|s| (s.x, s.y)).collect()
    }
}

/// Start cell, goal cell and initial heading for a route.
pub fn resolve_route(world: &TerrainWorld, route: &Route) -> Result<(Cell, Cell, f64)> {
    let start = route
        .start
        .map_or(world.anchors.start.center_cell(), |[x, y]| (x, y));
    let goal = route
        .goal
        .map_or(world.anchors.goal.center_cell(), |[x, y]| (x, y));
    for (what, c) in [("start", start), ("goal", goal)] {
        if c.0 >= world.width || c.1 >= world.height {
            return Err(Error::Config(format!(
                "route `{}`: {what} {c:?} outside the world",
                route.name
            )));
        }
    }
    let heading = match route.heading {
        Some(h) => h,
        None => default_heading(world, start, goal),
    };
    Ok((start, goal, heading))
}

/// Faces the farthest cell of the shortest drivable route still in sight, up to
/// a few cells ahead; straight at the goal when no route exists.
/// True when the segment between the two cell centers stays on drivable cells.
fn sight_line(world: &TerrainWorld, a: Cell, b: Cell) -> bool {
    let (dx, dy) = (b.0 as f64 - a.0 as f64, b.1 as f64 - a.1 as f64);
    let samples = (dx.hypot(dy) * 4.0).ceil().max(1.0) as usize;
    (0..=samples).all(|k| {
        let t = k as f64 / samples as f64;
        let (x, y) = (a.0 as f64 + 0.5 + t * dx, a.1 as f64 + 0.5 + t * dy);
        world.is_drivable_cell(x.floor() as usize, y.floor() as usize)
    })
}

fn default_heading(world: &TerrainWorld, start: Cell, goal: Cell) -> f64 {
    const LOOKAHEAD: usize = 24;
    let toward = |c: Cell| (c.1 as f64 - start.1 as f64).atan2(c.0 as f64 - start.0 as f64);
    let (w, h) = (world.width, world.height);
    let mut parent = vec![usize::MAX; w * h];
    let mut queue = VecDeque::from([start]);
    parent[start.1 * w + start.0] = start.1 * w + start.0;
    while let Some(c) = queue.pop_front() {
        if c == goal {
            let mut path = vec![c];
            let mut i = c.1 * w + c.0;
            while parent[i] != i {
                i = parent[i];
                path.push((i % w, i / w));
            }
            path.reverse();
            // Farthest path cell visible from the start along drivable cells;
            // a grid path alone staircases and would suggest a diagonal.
            let ahead = path
                .iter()
                .take(LOOKAHEAD + 1)
                .take_while(|&&c| sight_line(world, start, c))
                .last()
                .copied()
                .unwrap_or(start);
            return if ahead == start {
                toward(goal)
            } else {
                toward(ahead)
            };
        }
        for n in neighbors4(c.0, c.1, w, h) {
            let ni = n.1 * w + n.0;
            if parent[ni] == usize::MAX && world.is_drivable_cell(n.0, n.1) {
                parent[ni] = c.1 * w + c.0;
                queue.push_back(n);
            }
        }
    }
    if goal == start {
        0.0
    } else {
        toward(goal)
    }
}

/// Patch-space mask of hazard cells, when the world has hazard regions.
pub fn hazard_mask(world: &TerrainWorld, patch: &SensorPatch) -> Option<Mask> {
    if world.hazards.is_empty() {
        return None;
    }
    Some(Mask::from_fn(patch.width, patch.height, |x, y| {
        world.is_hazard(patch.origin.0 + x, patch.origin.1 + y)
    }))
}

/// Direction of the path a few cells past index `i`; none at the path's end.
fn path_heading(path: &[Cell], i: usize) -> Option<f64> {
    const AHEAD: usize = 3;
    let (a, b) = (path[i], path[(i + AHEAD).min(path.len() - 1)]);
    (a != b).then(|| (b.1 as f64 - a.1 as f64).atan2(b.0 as f64 - a.0 as f64))
}

fn front_axle(p: &VehiclePose, wheelbase: f64) -> VehiclePose {
    VehiclePose {
        x: p.x + wheelbase * p.theta.cos(),
        y: p.y + wheelbase * p.theta.sin(),
        ..*p
    }
}

/// Marks every non-occupied cell whose center lies within `radius` of an
/// occupied cell as occupied, except cells for which `keep` holds.
fn inflate(grid: &OccupancyGrid, radius: f64, keep: impl Fn(Cell) -> bool) -> OccupancyGrid {
    let mut out = grid.clone();
    let s = grid.s;
    let reach = (radius / s + 0.5).ceil() as i64;
    for cy in 0..grid.n_y {
        for cx in 0..grid.n_x {
            if grid.get(cx, cy) == CellState::Occupied || keep((cx, cy)) {
                continue;
            }
            let near = (-reach..=reach).any(|dy| {
                (-reach..=reach).any(|dx| {
                    let (ox, oy) = (cx as i64 + dx, cy as i64 + dy);
                    // Distance from this cell's center to the other cell's square.
                    let gx = ((dx.abs() as f64 - 0.5) * s).max(0.0);
                    let gy = ((dy.abs() as f64 - 0.5) * s).max(0.0);
                    gx * gx + gy * gy < radius * radius
                        && grid.in_bounds(ox, oy)
                        && grid.get(ox as usize, oy as usize) == CellState::Occupied
                })
            });
            if near {
                out.set(cx, cy, CellState::Occupied);
            }
        }
    }
    out
}

/// Change-list turning `old` into `new`; both grids share their extent.
fn grid_diff(old: &OccupancyGrid, new: &OccupancyGrid, frame_id: u64) -> GridUpdate {
    let changed = old
        .cells()
        .iter()
        .zip(new.cells())
        .enumerate()
        .filter(|(_, (a, b))| a != b)
        .map(|(i, (&a, &b))| CellChange {
            cell: (i % new.n_x, i / new.n_x),
            old: a,
            new: b,
        })
        .collect();
    GridUpdate { frame_id, changed }
}

struct Loop<'a> {
    cfg: &'a ScenarioConfig,
    world: &'a TerrainWorld,
    oracle: Box<dyn Oracle>,
    fallback: Option<Box<dyn Oracle>>,
    sensor: Sensor,
    grid: OccupancyGrid,
    /// `grid` with obstacles grown by the global clearance.
    cspace: OccupancyGrid,
    goal: Cell,
    track: Option<TrackState>,
    dstar: Option<DStarState>,
    global: Option<GlobalPath>,
    trajectory: Option<Trajectory>,
    oracle_queries: usize,
    oracle_calls: usize,
    frames: usize,
}

impl Loop<'_> {
    /// One perception/planning cycle. Returns false when no global path exists.
    fn perceive(&mut self, pose: &VehiclePose, events: &mut Vec<Event>) -> Result<bool> {
        let cfg = self.cfg;
        let patch = self
            .sensor
            .capture_patch(self.world, pose, cfg.sensor_window)?;
        self.frames += 1;
        let fid = patch.frame_id;
        let (frame, needs_query) = match self.track.take() {
            Some(prev) => {
                let next = track_masks(&prev, &patch, &cfg.segmentation)?;
                if next.lost {
                    (Some(next.frame), true)
                } else {
                    events.push(Event::Perception {
                        frame_id: fid,
                        masks: next.frame.len(),
                        tracked: true,
                    });
                    self.track = Some(next);
                    (None, false)
                }
            }
            None => (Some(segment_patch(&patch, &cfg.segmentation)?), true),
        };
        if let (Some(frame), true) = (frame, needs_query) {
            events.push(Event::Perception {
                frame_id: fid,
                masks: frame.len(),
                tracked: false,
            });
            let hazard = hazard_mask(self.world, &patch);
            let query = render_query(&frame, &patch, &cfg.prompt)?;
            let ctx = OracleContext {
                query: &query,
                patch: &patch,
                drivable: self.world.drivable_classes,
                hazard: hazard.as_ref(),
            };
            let (result, calls) =
                query_with_contingency(self.oracle.as_mut(), self.fallback.as_deref_mut(), &ctx);
            self.oracle_queries += 1;
            self.oracle_calls += calls;
            match result {
                Ok(out) => {
                    events.push(Event::OracleQuery {
                        frame_id: fid,
                        indices: out.response.indices.clone(),
                        calls,
                        fallback: out.used_fallback,
                    });
                    self.track = Some(TrackState::new(frame, out.response.indices));
                }
                Err(Error::NoDrivableSelection) => {
                    // A failed selection carries no terrain evidence: keep the map.
                    events.push(Event::OracleFailed {
                        frame_id: fid,
                        calls,
                        reason: "no drivable selection".into(),
                    });
                }
                Err(e) => return Err(e),
            }
        }

        let vehicle_cell = self.grid.voxelize(pose.x, pose.y)?;
        if let Some(track) = &self.track {
            let points = label_points(&patch, &track.drivable_mask())?;
            let update = self.grid.update(&points, fid)?;
            events.push(Event::MapUpdate {
                frame_id: fid,
                changed: update.changed.len(),
            });
        }
        // The global planner works on a configuration space with obstacles
        // grown by the global clearance, keeping its path off the edges.
        // Around the vehicle obstacles stay ungrown, so a vehicle inside the
        // margin still has a way out.
        let reach = (cfg.planner.global_clearance / self.grid.s).ceil() as usize;
        let near_vehicle = |c: Cell| {
            c.0.abs_diff(vehicle_cell.0) <= reach && c.1.abs_diff(vehicle_cell.1) <= reach
        };
        let cspace = inflate(&self.grid, cfg.planner.global_clearance, |c| {
            c == self.goal || near_vehicle(c)
        });
        let cspace_update = grid_diff(&self.cspace, &cspace, fid);
        self.cspace = cspace;
        if let Some(state) = &mut self.dstar {
            dstar_update(state, &cspace_update, vehicle_cell)?;
        } else {
            match dstar_init(
                &self.cspace,
                vehicle_cell,
                self.goal,
                cfg.planner.global_unknown,
            ) {
                Ok(s) => self.dstar = Some(s),
                Err(Error::PlannerInit(reason)) => {
                    events.push(Event::GlobalNoPath { reason });
                    self.global = None;
                    self.trajectory = None;
                    return Ok(false);
                }
                Err(e) => return Err(e),
            }
        }
        let state = self.dstar.as_mut().expect("initialized above");
        let before = state.expanded_count();
        match dstar_compute(state) {
            Ok(path) => {
                events.push(Event::GlobalPlan {
                    cost: path.cost,
                    cells: path.cells.len(),
                    expanded: state.expanded_count() - before,
                });
                self.global = Some(path);
            }
            Err(Error::NoPath) => {
                events.push(Event::GlobalNoPath {
                    reason: "goal unreachable on current map".into(),
                });
                self.global = None;
                self.trajectory = None;
                return Ok(false);
            }
            Err(e) => return Err(e),
        }

        let s = self.grid.s;
        let global = self.global.as_ref().expect("set above");
        // The local goal stays on the known-free stretch of the global path,
        // which starts at the vehicle's cell.
        let known = global
            .cells
            .iter()
            .take_while(|c| self.cspace.get(c.0, c.1) == CellState::Free)
            .count();
        let radius = cfg.planner.local_goal_radius_cells * s;
        let Some(target) = select_local_goal(&global.cells[..known.max(1)], s, pose, radius) else {
            return Ok(true);
        };
        let i = global
            .cells
            .iter()
            .position(|&c| c == target)
            .expect("goal lies on the path");
        let hp = &cfg.planner.hybrid;
        let prims = hp.primitives(&cfg.vehicle, s);
        // Arriving aligned with the global path leaves room for what follows;
        // when no aligned arrival exists, any heading will do.
        let planned = match path_heading(&global.cells, i) {
            Some(h) => match hybrid_astar_oriented(
                &self.grid,
                pose,
                target,
                Some(h),
                &cfg.vehicle,
                &prims,
                hp,
            ) {
                Err(Error::NoPath) => {
                    hybrid_astar(&self.grid, pose, target, &cfg.vehicle, &prims, hp)
                }
                other => other,
            },
            None => hybrid_astar(&self.grid, pose, target, &cfg.vehicle, &prims, hp),
        };
        match planned {
            Ok(plan) => {
                events.push(Event::LocalPlan {
                    poses: plan.trajectory.len(),
                    cost: plan.trajectory.total_cost,
                    expanded: plan.debug.expanded_count,
                });
                self.trajectory = (plan.trajectory.len() >= 2).then_some(plan.trajectory);
            }
            Err(e @ (Error::NoPath | Error::PlannerInit(_) | Error::OutOfExtent { .. })) => {
                events.push(Event::LocalFailed {
                    reason: e.to_string(),
                });
                self.trajectory = None;
            }
            Err(e) => return Err(e),
        }
        Ok(true)
    }
}

fn brake(pose: &VehiclePose, cfg: &ScenarioConfig) -> ControlCommand {
    let accel = if pose.v > 0.0 {
        (-pose.v / cfg.dt).max(cfg.vehicle.accel_min)
    } else {
        0.0
    };
    ControlCommand { delta: 0.0, accel }
}

/// Runs one route to completion. `seed` drives oracle noise.
pub fn run_scenario(
    cfg: &ScenarioConfig,
    world: &TerrainWorld,
    route: &Route,
    seed: u64,
) -> Result<RunLog> {
    cfg.validate()?;
    let (start, goal, heading) = resolve_route(world, route)?;
    let s = cfg.grid_s.unwrap_or(world.cell_size);
    let (ex, ey) = world.extent();
    let grid = OccupancyGrid::covering(ex, ey, s);
    let goal_cell = grid.voxelize(
        world.cell_center(goal.0, goal.1).0,
        world.cell_center(goal.0, goal.1).1,
    )?;
    let mut lp = Loop {
        cfg,
        world,
        oracle: cfg.oracle.build(seed)?,
        fallback: cfg
            .fallback
            .as_ref()
            .map(|f| f.build(seed ^ 0xFA11_BACC))
            .transpose()?,
        sensor: Sensor::new(),
        cspace: grid.clone(),
        grid,
        goal: goal_cell,
        track: None,
        dstar: None,
        global: None,
        trajectory: None,
        oracle_queries: 0,
        oracle_calls: 0,
        frames: 0,
    };
    let (sx, sy) = world.cell_center(start.0, start.1);
    let (gx, gy) = world.cell_center(goal.0, goal.1);
    let tolerance = cfg.goal_tolerance_cells * world.cell_size;
    let mut pose = VehiclePose::new(sx, sy, heading, 0.0);
    let mut ctrl = TrackingState::default();
    let mut steps = Vec::new();
    let mut outcome = Outcome::Timeout;
    let mut reason = None;
    let mut anchor = (pose.x, pose.y);
    let mut stalled = 0usize;

    for step in 0..cfg.step_budget {
        let mut events = Vec::new();
        if step % cfg.perception_period == 0 {
            let planned = lp.perceive(&pose, &mut events)?;
            if !planned && step == 0 {
                outcome = Outcome::NoPath;
                reason = Some("no global path from the start".into());
                steps.push(record(
                    step,
                    &pose,
                    &ControlCommand::default(),
                    None,
                    lp.grid.frame_id,
                    events,
                ));
                break;
            }
        }
        let (cmd, cte) = match &lp.trajectory {
            Some(traj) => {
                let end = traj.poses.last().expect("trajectory has poses");
                let remaining = pose.distance_to(end.x, end.y);
                let v_ref = cfg
                    .cruise_speed
                    .min((-cfg.vehicle.accel_min * remaining).sqrt());
                // Stanley's reference point is the front axle; shifting the
                // planned rear-axle path to it keeps the rear on the plan.
                let l = cfg.vehicle.wheelbase;
                let front =
                    Trajectory::from_poses(traj.poses.iter().map(|p| front_axle(p, l)).collect());
                let (cmd, next) = step_controller(
                    &front_axle(&pose, l),
                    &front,
                    v_ref,
                    &ctrl,
                    &cfg.gains,
                    &cfg.vehicle,
                    cfg.dt,
                )?;
                ctrl = next;
                (cmd, Some(next.cte))
            }
            None => {
                ctrl = TrackingState::default();
                (brake(&pose, cfg), None)
            }
        };
        pose = step_vehicle(&pose, &cmd, cfg.dt, &cfg.vehicle)?;

        let terminal = match world.cell_of(pose.x, pose.y) {
            None => Some((Outcome::Stuck, "left the world".to_string())),
            Some((cx, cy)) if world.is_hazard(cx, cy) => {
                Some((Outcome::Stuck, format!("entered hazard cell ({cx}, {cy})")))
            }
            Some((cx, cy)) if !world.is_drivable_cell(cx, cy) => Some((
                Outcome::Stuck,
                format!("entered non-drivable cell ({cx}, {cy})"),
            )),
            Some(_) if pose.distance_to(gx, gy) <= tolerance => {
                Some((Outcome::Success, "goal reached".to_string()))
            }
            Some(_) => {
                if lp.trajectory.is_some() {
                    stalled += 1;
                    if pose.distance_to(anchor.0, anchor.1) > cfg.stuck_distance {
                        anchor = (pose.x, pose.y);
                        stalled = 0;
                    }
                } else {
                    anchor = (pose.x, pose.y);
                    stalled = 0;
                }
                (stalled >= cfg.stuck_steps).then(|| {
                    (
                        Outcome::Stuck,
                        format!("no progress over {} steps", cfg.stuck_steps),
                    )
                })
            }
        };
        if let Some((o, why)) = &terminal {
            events.push(Event::Terminal {
                reason: why.clone(),
            });
            outcome = *o;
            reason = Some(why.clone());
        }
        steps.push(record(step, &pose, &cmd, cte, lp.grid.frame_id, events));
        if terminal.is_some() {
            break;
        }
    }
    if outcome == Outcome::Timeout {
        reason = Some(format!("step budget {} exhausted", cfg.step_budget));
    }
    let elapsed_steps = steps.len();
    let summary = RunSummary {
        route: route.name.clone(),
        seed,
        outcome,
        reason,
        elapsed_steps,
        sim_time: elapsed_steps as f64 * cfg.dt,
        oracle_queries: lp.oracle_queries,
        oracle_calls: lp.oracle_calls,
        frames: lp.frames,
        start,
        goal,
        final_pose: pose,
        global_path: lp.global.map(|g| g.cells).unwrap_or_default(),
        last_trajectory: lp
            .trajectory
            .map(|t| t.poses.iter().map(|p| [p.x, p.y]).collect())
            .unwrap_or_default(),
    };
    Ok(RunLog {
        summary,
        steps,
        grid: lp.grid,
    })
}

fn record(
    step: usize,
    pose: &VehiclePose,
    cmd: &ControlCommand,
    cte: Option<f64>,
    frame: u64,
    events: Vec<Event>,
) -> StepRecord {
    StepRecord {
        step,
        x: pose.x,
        y: pose.y,
        theta: wrap_angle(pose.theta),
        v: pose.v,
        delta: cmd.delta,
        accel: cmd.accel,
        cte,
        grid_frame_id: frame,
        events,
    }
}
