//! D* Lite on an 8-connected grid with Euclidean heuristic.
//!
//! Edge cost is 1 (orthogonal) or √2 (diagonal) between two unblocked cells and
//! infinite otherwise. The search runs from the goal towards the start so that
//! start moves only shift the key modifier `k_m`.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use super::{Cell, PlannerDebug, UnknownPolicy};
use crate::error::{Error, Result};
use crate::mapping::{GridUpdate, OccupancyGrid};

const SQRT2: f64 = std::f64::consts::SQRT_2;
const NEIGHBORS: [(i64, i64, f64); 8] = [
    (1, 0, 1.0),
    (-1, 0, 1.0),
    (0, 1, 1.0),
    (0, -1, 1.0),
    (1, 1, SQRT2),
    (1, -1, SQRT2),
    (-1, 1, SQRT2),
    (-1, -1, SQRT2),
];

/// Priority key, compared lexicographically.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Key(pub f64, pub f64);

impl Key {
    fn cmp_total(&self, other: &Key) -> Ordering {
        self.0.total_cmp(&other.0).then(self.1.total_cmp(&other.1))
    }

    fn lt(&self, other: &Key) -> bool {
        self.cmp_total(other) == Ordering::Less
    }

    /// `self ≤ other` up to rounding in the first component. Keys are sums of
    /// path costs and Euclidean distances, so mathematically tied keys can
    /// differ in the last bits; expanding a tie is always safe, stopping on
    /// one can leave a stale path behind.
    fn le_approx(&self, other: &Key) -> bool {
        self.0 <= other.0 + 1e-9 * other.0.abs().max(1.0)
    }
}

#[derive(Clone, Copy, Debug)]
struct Entry {
    key: Key,
    seq: u64,
    node: usize,
}

impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Entry {}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Entry {
    // Key first, then insertion order.
    fn cmp(&self, other: &Self) -> Ordering {
        self.key
            .cmp_total(&other.key)
            .then(self.seq.cmp(&other.seq))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GlobalPath {
    pub cells: Vec<Cell>,
    pub cost: f64,
}

/// Incremental search bookkeeping.
#[derive(Clone, Debug)]
pub struct DStarState {
    n_x: usize,
    n_y: usize,
    policy: UnknownPolicy,
    blocked: Vec<bool>,
    g: Vec<f64>,
    rhs: Vec<f64>,
    heap: BinaryHeap<Reverse<Entry>>,
    /// Live queue membership; heap entries with a different `seq` are stale.
    queued: Vec<Option<(Key, u64)>>,
    queue_len: usize,
    seq: u64,
    k_m: f64,
    start: usize,
    last_start: usize,
    goal: usize,
    expanded: usize,
    queue_peak: usize,
}

impl DStarState {
    fn idx(&self, c: Cell) -> usize {
        c.1 * self.n_x + c.0
    }

    fn cell(&self, i: usize) -> Cell {
        (i % self.n_x, i / self.n_x)
    }

    pub fn start(&self) -> Cell {
        self.cell(self.start)
    }

    pub fn goal(&self) -> Cell {
        self.cell(self.goal)
    }

    pub fn g(&self, c: Cell) -> f64 {
        self.g[self.idx(c)]
    }

    pub fn rhs(&self, c: Cell) -> f64 {
        self.rhs[self.idx(c)]
    }

    pub fn k_m(&self) -> f64 {
        self.k_m
    }

    pub fn queue_len(&self) -> usize {
        self.queue_len
    }

    pub fn is_queued(&self, c: Cell) -> bool {
        self.queued[self.idx(c)].is_some()
    }

    pub fn is_blocked(&self, c: Cell) -> bool {
        self.blocked[self.idx(c)]
    }

    pub fn expanded_count(&self) -> usize {
        self.expanded
    }

    fn heuristic(&self, a: usize, b: usize) -> f64 {
        let (ax, ay) = self.cell(a);
        let (bx, by) = self.cell(b);
        (ax as f64 - bx as f64).hypot(ay as f64 - by as f64)
    }

    fn key_of(&self, u: usize) -> Key {
        let m = self.g[u].min(self.rhs[u]);
        Key(m + self.heuristic(self.start, u) + self.k_m, m)
    }

    fn neighbors(&self, u: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (x, y) = self.cell(u);
        NEIGHBORS.iter().filter_map(move |&(dx, dy, c)| {
            let nx = x as i64 + dx;
            let ny = y as i64 + dy;
            (nx >= 0 && ny >= 0 && (nx as usize) < self.n_x && (ny as usize) < self.n_y)
                .then(|| (ny as usize * self.n_x + nx as usize, c))
        })
    }

    fn edge_cost(&self, u: usize, v: usize, base: f64) -> f64 {
        if self.blocked[u] || self.blocked[v] {
            f64::INFINITY
        } else {
            base
        }
    }

    fn push(&mut self, u: usize, key: Key) {
        self.seq += 1;
        if self.queued[u].is_none() {
            self.queue_len += 1;
        }
        self.queued[u] = Some((key, self.seq));
        self.heap.push(Reverse(Entry {
            key,
            seq: self.seq,
            node: u,
        }));
        self.queue_peak = self.queue_peak.max(self.queue_len);
    }

    fn remove(&mut self, u: usize) {
        if self.queued[u].take().is_some() {
            self.queue_len -= 1;
        }
    }

    fn discard_stale(&mut self) {
        while let Some(Reverse(top)) = self.heap.peek() {
            match self.queued[top.node] {
                Some((_, seq)) if seq == top.seq => break,
                _ => {
                    self.heap.pop();
                }
            }
        }
    }

    fn top(&mut self) -> Option<Entry> {
        self.discard_stale();
        self.heap.peek().map(|r| r.0)
    }

    fn update_vertex(&mut self, u: usize) {
        if u != self.goal {
            let best = self
                .neighbors(u)
                .map(|(v, c)| self.edge_cost(u, v, c) + self.g[v])
                .fold(f64::INFINITY, f64::min);
            self.rhs[u] = best;
        }
        self.remove(u);
        if self.g[u] != self.rhs[u] {
            let key = self.key_of(u);
            self.push(u, key);
        }
    }

    fn compute(&mut self) {
        while let Some(top) = self.top() {
            let start_key = self.key_of(self.start);
            let start_inconsistent = self.rhs[self.start] != self.g[self.start];
            if !top.key.le_approx(&start_key) && !start_inconsistent {
                break;
            }
            let u = top.node;
            let k_new = self.key_of(u);
            self.expanded += 1;
            if top.key.lt(&k_new) {
                self.push(u, k_new);
            } else if self.g[u] > self.rhs[u] {
                self.g[u] = self.rhs[u];
                self.remove(u);
                let preds: Vec<usize> = self.neighbors(u).map(|(v, _)| v).collect();
                for s in preds {
                    self.update_vertex(s);
                }
            } else {
                self.g[u] = f64::INFINITY;
                let preds: Vec<usize> = self
                    .neighbors(u)
                    .map(|(v, _)| v)
                    .chain(std::iter::once(u))
                    .collect();
                for s in preds {
                    self.update_vertex(s);
                }
            }
        }
    }

    /// Greedy descent on `c(u, v) + g(v)` from start to goal.
    fn extract_path(&self) -> Result<GlobalPath> {
        if self.g[self.start].is_infinite() {
            return Err(Error::NoPath);
        }
        let mut cells = vec![self.cell(self.start)];
        let mut cost = 0.0;
        let mut cur = self.start;
        let limit = self.n_x * self.n_y;
        while cur != self.goal {
            let (next, step) = self
                .neighbors(cur)
                .map(|(v, c)| (v, self.edge_cost(cur, v, c)))
                .min_by(|a, b| (a.1 + self.g[a.0]).total_cmp(&(b.1 + self.g[b.0])))
                .ok_or(Error::NoPath)?;
            if !(step + self.g[next]).is_finite() || cells.len() > limit {
                return Err(Error::NoPath);
            }
            cost += step;
            cur = next;
            cells.push(self.cell(cur));
        }
        Ok(GlobalPath { cells, cost })
    }

    pub fn debug(&self, path: Option<&GlobalPath>) -> PlannerDebug {
        PlannerDebug {
            expanded_count: self.expanded,
            path: path.map(|p| p.cells.clone()).unwrap_or_default(),
            cost: path.map(|p| p.cost),
            queue_peak: self.queue_peak,
        }
    }

    /// Queue invariants: membership equals local inconsistency, and no
    /// inconsistent node keys below the start.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        let start_key = self.key_of(self.start);
        for u in 0..self.g.len() {
            let inconsistent = self.g[u] != self.rhs[u];
            if inconsistent != self.queued[u].is_some() {
                return Err(format!(
                    "node {:?}: inconsistent={inconsistent} queued={}",
                    self.cell(u),
                    !inconsistent
                ));
            }
            if inconsistent && self.key_of(u).lt(&start_key) {
                return Err(format!("node {:?} keys below the start", self.cell(u)));
            }
        }
        Ok(())
    }
}

/// Prepares a search from `start` to `goal`; only the goal is queued.
pub fn dstar_init(
    grid: &OccupancyGrid,
    start: Cell,
    goal: Cell,
    policy: UnknownPolicy,
) -> Result<DStarState> {
    let n = grid.n_x * grid.n_y;
    let in_bounds = |c: Cell| c.0 < grid.n_x && c.1 < grid.n_y;
    if !in_bounds(start) || !in_bounds(goal) {
        return Err(Error::PlannerInit("start or goal outside the grid".into()));
    }
    let blocked: Vec<bool> = grid.cells().iter().map(|c| policy.blocks(*c)).collect();
    let mut state = DStarState {
        n_x: grid.n_x,
        n_y: grid.n_y,
        policy,
        blocked,
        g: vec![f64::INFINITY; n],
        rhs: vec![f64::INFINITY; n],
        heap: BinaryHeap::new(),
        queued: vec![None; n],
        queue_len: 0,
        seq: 0,
        k_m: 0.0,
        start: 0,
        last_start: 0,
        goal: 0,
        expanded: 0,
        queue_peak: 0,
    };
    state.start = state.idx(start);
    state.last_start = state.start;
    state.goal = state.idx(goal);
    if state.blocked[state.start] {
        return Err(Error::PlannerInit(format!("start {start:?} is occupied")));
    }
    if state.blocked[state.goal] {
        return Err(Error::PlannerInit(format!("goal {goal:?} is occupied")));
    }
    state.rhs[state.goal] = 0.0;
    let key = state.key_of(state.goal);
    state.push(state.goal, key);
    Ok(state)
}

/// Repairs the search until the start is consistent, then extracts the path.
pub fn dstar_compute(state: &mut DStarState) -> Result<GlobalPath> {
    state.compute();
    state.extract_path()
}

/// Applies a change-list and a start move.
pub fn dstar_update(state: &mut DStarState, update: &GridUpdate, new_start: Cell) -> Result<()> {
    if new_start.0 >= state.n_x || new_start.1 >= state.n_y {
        return Err(Error::PlannerInit(format!(
            "start {new_start:?} outside the grid"
        )));
    }
    let ns = state.idx(new_start);
    state.k_m += state.heuristic(state.last_start, ns);
    state.last_start = ns;
    state.start = ns;
    for change in &update.changed {
        let (x, y) = change.cell;
        if x >= state.n_x || y >= state.n_y {
            return Err(Error::PlannerInit(format!(
                "changed cell {:?} outside the grid",
                change.cell
            )));
        }
        let u = state.idx(change.cell);
        let now_blocked = state.policy.blocks(change.new);
        if state.blocked[u] == now_blocked {
            continue;
        }
        state.blocked[u] = now_blocked;
        let affected: Vec<usize> = state
            .neighbors(u)
            .map(|(v, _)| v)
            .chain(std::iter::once(u))
            .collect();
        for v in affected {
            state.update_vertex(v);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mapping::{CellChange, CellState};

    fn free_grid(n: usize) -> OccupancyGrid {
        let mut g = OccupancyGrid::new(n, n, 1.0);
        for y in 0..n {
            for x in 0..n {
                g.set(x, y, CellState::Free);
            }
        }
        g
    }

    #[test]
    fn init_state() {
        let g = free_grid(5);
        let s = dstar_init(&g, (0, 0), (4, 4), UnknownPolicy::Free).unwrap();
        assert_eq!(s.rhs((4, 4)), 0.0);
        assert!(s.g((4, 4)).is_infinite());
        assert_eq!(s.queue_len(), 1);
        assert!(s.is_queued((4, 4)));
    }

    #[test]
    fn occupied_goal_rejected() {
        let mut g = free_grid(5);
        g.set(4, 4, CellState::Occupied);
        assert!(matches!(
            dstar_init(&g, (0, 0), (4, 4), UnknownPolicy::Free),
            Err(Error::PlannerInit(_))
        ));
    }

    #[test]
    fn start_equals_goal() {
        let g = free_grid(3);
        let mut s = dstar_init(&g, (1, 1), (1, 1), UnknownPolicy::Free).unwrap();
        let p = dstar_compute(&mut s).unwrap();
        assert_eq!(p.cells, vec![(1, 1)]);
        assert_eq!(p.cost, 0.0);
    }

    #[test]
    fn diagonal_three_by_three() {
        let g = free_grid(3);
        let mut s = dstar_init(&g, (0, 0), (2, 2), UnknownPolicy::Free).unwrap();
        let p = dstar_compute(&mut s).unwrap();
        assert!((p.cost - 2.0 * SQRT2).abs() < 1e-12);
        s.check_invariants().unwrap();
    }

    #[test]
    fn wall_means_no_path() {
        let mut g = free_grid(5);
        for y in 0..5 {
            g.set(2, y, CellState::Occupied);
        }
        let mut s = dstar_init(&g, (0, 0), (4, 4), UnknownPolicy::Free).unwrap();
        assert!(matches!(dstar_compute(&mut s), Err(Error::NoPath)));
    }

    #[test]
    fn noop_update_keeps_path() {
        let g = free_grid(10);
        let mut s = dstar_init(&g, (0, 0), (9, 5), UnknownPolicy::Free).unwrap();
        let a = dstar_compute(&mut s).unwrap();
        dstar_update(&mut s, &GridUpdate::default(), (0, 0)).unwrap();
        let b = dstar_compute(&mut s).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn blocked_path_cell_is_avoided() {
        let g = free_grid(10);
        let mut s = dstar_init(&g, (0, 5), (9, 5), UnknownPolicy::Free).unwrap();
        let a = dstar_compute(&mut s).unwrap();
        let hit = a.cells[4];
        let update = GridUpdate {
            frame_id: 1,
            changed: vec![CellChange {
                cell: hit,
                old: CellState::Free,
                new: CellState::Occupied,
            }],
        };
        dstar_update(&mut s, &update, (0, 5)).unwrap();
        let b = dstar_compute(&mut s).unwrap();
        assert!(!b.cells.contains(&hit));

        let mut g2 = g.clone();
        g2.apply(&update);
        let mut fresh = dstar_init(&g2, (0, 5), (9, 5), UnknownPolicy::Free).unwrap();
        let c = dstar_compute(&mut fresh).unwrap();
        assert!((b.cost - c.cost).abs() < 1e-9);
        s.check_invariants().unwrap();
    }

    /// Cells flip both ways and the start jumps around; tied keys that differ
    /// only by rounding once stopped the search early here.
    #[test]
    fn two_way_flips_match_scratch() {
        use rand::{Rng, SeedableRng};
        let n = 12;
        let goal = (n - 1, n - 1);
        for seed in 1300..1400u64 {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut grid = free_grid(n);
            for y in 0..n {
                for x in 0..n {
                    if rng.random_bool(0.25) && (x, y) != goal && (x, y) != (0, 0) {
                        grid.set(x, y, CellState::Occupied);
                    }
                }
            }
            let mut start = (0, 0);
            let mut s = dstar_init(&grid, start, goal, UnknownPolicy::Free).unwrap();
            let _ = dstar_compute(&mut s);
            for step in 0..40 {
                let mut changed: Vec<CellChange> = Vec::new();
                for _ in 0..rng.random_range(0..4) {
                    let c = (rng.random_range(0..n), rng.random_range(0..n));
                    if c == goal || changed.iter().any(|ch| ch.cell == c) {
                        continue;
                    }
                    let old = grid.get(c.0, c.1);
                    let new = if old == CellState::Occupied {
                        CellState::Free
                    } else {
                        CellState::Occupied
                    };
                    grid.set(c.0, c.1, new);
                    changed.push(CellChange { cell: c, old, new });
                }
                if rng.random_bool(0.5) {
                    start = (rng.random_range(0..n), rng.random_range(0..n));
                }
                dstar_update(
                    &mut s,
                    &GridUpdate {
                        frame_id: step,
                        changed,
                    },
                    start,
                )
                .unwrap();
                let inc = dstar_compute(&mut s).ok().map(|p| p.cost);
                // A scratch search refuses an occupied start outright.
                let scratch = dstar_init(&grid, start, goal, UnknownPolicy::Free)
                    .and_then(|mut fresh| dstar_compute(&mut fresh))
                    .ok()
                    .map(|p| p.cost);
                match (inc, scratch) {
                    (Some(a), Some(b)) => {
                        assert!((a - b).abs() < 1e-9, "seed {seed} step {step}: {a} vs {b}")
                    }
                    (a, b) => assert_eq!(a, b, "seed {seed} step {step}"),
                }
            }
        }
    }
}
