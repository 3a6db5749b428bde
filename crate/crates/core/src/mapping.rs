//! Occupancy mapping: drivability labels → voxelized grid cells → change-lists.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::Mask;
use crate::world::SensorPatch;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellState {
    Free,
    Occupied,
    Unknown,
}

impl CellState {
    fn code(self) -> u8 {
        match self {
            CellState::Free => 0,
            CellState::Occupied => 1,
            CellState::Unknown => 2,
        }
    }
}

/// A sensed point labelled drivable (`occupied = false`) or not.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledPoint {
    pub x: f64,
    pub y: f64,
    pub occupied: bool,
}

/// One point per patch cell at its world-space center; cells inside the
/// drivability mask are labelled free.
pub fn label_points(patch: &SensorPatch, mask: &Mask) -> Result<Vec<LabeledPoint>> {
    if mask.dims() != patch.dims() {
        return Err(Error::DimensionMismatch {
            expected: patch.dims(),
            actual: mask.dims(),
        });
    }
    let mut out = Vec::with_capacity(patch.width * patch.height);
    for py in 0..patch.height {
        for px in 0..patch.width {
            let (x, y) = patch.pixel_center(px, py);
            out.push(LabeledPoint {
                x,
                y,
                occupied: !mask.get(px, py),
            });
        }
    }
    Ok(out)
}

/// Componentwise `floor(p / s)`.
///
/// The floating quotient is corrected by one step either way so the result
/// agrees with exact floor division whenever `v·s` is representable.
pub fn voxelize_point(p: (f64, f64), s: f64) -> (i64, i64) {
    let axis = |c: f64| {
        let mut v = (c / s).floor();
        if v * s > c {
            v -= 1.0;
        } else if (v + 1.0) * s <= c {
            v += 1.0;
        }
        v as i64
    };
    (axis(p.0), axis(p.1))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellChange {
    pub cell: (usize, usize),
    pub old: CellState,
    pub new: CellState,
}

/// Exact list of cells whose state changed in one frame.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridUpdate {
    pub frame_id: u64,
    pub changed: Vec<CellChange>,
}

impl GridUpdate {
    pub fn is_empty(&self) -> bool {
        self.changed.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OccupancyGrid {
    pub n_x: usize,
    pub n_y: usize,
    /// World units per cell.
    pub s: f64,
    pub frame_id: u64,
    cells: Vec<CellState>,
}

impl OccupancyGrid {
    pub fn new(n_x: usize, n_y: usize, s: f64) -> OccupancyGrid {
        assert!(
            s > 0.0 && s.is_finite(),
            "downsampling factor must be positive"
        );
        OccupancyGrid {
            n_x,
            n_y,
            s,
            frame_id: 0,
            cells: vec![CellState::Unknown; n_x * n_y],
        }
    }

    /// 12,000 × 12,000 map units at `s = 20` → 600 × 600 cells.
    pub fn full_scale() -> OccupancyGrid {
        OccupancyGrid::new(600, 600, 20.0)
    }

    /// Smallest grid covering a `width × height` extent.
    pub fn covering(width: f64, height: f64, s: f64) -> OccupancyGrid {
        OccupancyGrid::new((width / s).ceil() as usize, (height / s).ceil() as usize, s)
    }

    #[inline]
    pub fn get(&self, cx: usize, cy: usize) -> CellState {
        self.cells[cy * self.n_x + cx]
    }

    pub fn set(&mut self, cx: usize, cy: usize, state: CellState) {
        self.cells[cy * self.n_x + cx] = state;
    }

    pub fn in_bounds(&self, cx: i64, cy: i64) -> bool {
        cx >= 0 && cy >= 0 && (cx as usize) < self.n_x && (cy as usize) < self.n_y
    }

    pub fn cells(&self) -> &[CellState] {
        &self.cells
    }

    /// Voxel of a world point; errors outside `[0, n·s)`.
    pub fn voxelize(&self, x: f64, y: f64) -> Result<(usize, usize)> {
        if !(x.is_finite() && y.is_finite()) {
            return Err(Error::OutOfExtent { x, y });
        }
        let (vx, vy) = voxelize_point((x, y), self.s);
        if self.in_bounds(vx, vy) {
            Ok((vx as usize, vy as usize))
        } else {
            Err(Error::OutOfExtent { x, y })
        }
    }

    pub fn cell_center(&self, cx: usize, cy: usize) -> (f64, f64) {
        ((cx as f64 + 0.5) * self.s, (cy as f64 + 0.5) * self.s)
    }

    /// Marks each touched cell occupied if any of its points is, free otherwise.
    pub fn update(&mut self, points: &[LabeledPoint], frame_id: u64) -> Result<GridUpdate> {
        let mut touched: BTreeMap<(usize, usize), bool> = BTreeMap::new();
        for p in points {
            let (cx, cy) = self.voxelize(p.x, p.y)?;
            *touched.entry((cy, cx)).or_insert(false) |= p.occupied;
        }
        self.frame_id = frame_id;
        let mut changed = Vec::new();
        for ((cy, cx), occupied) in touched {
            let new = if occupied {
                CellState::Occupied
            } else {
                CellState::Free
            };
            let old = self.get(cx, cy);
            if old != new {
                self.set(cx, cy, new);
                changed.push(CellChange {
                    cell: (cx, cy),
                    old,
                    new,
                });
            }
        }
        Ok(GridUpdate { frame_id, changed })
    }

    /// Replays a change-list.
    pub fn apply(&mut self, update: &GridUpdate) {
        for c in &update.changed {
            self.set(c.cell.0, c.cell.1, c.new);
        }
        self.frame_id = update.frame_id;
    }

    /// ASCII PGM, `free=0 occupied=1 unknown=2`, row 0 first.
    pub fn to_pgm(&self) -> String {
        let mut out = format!("P2\n{} {}\n2\n", self.n_x, self.n_y);
        for row in self.cells.chunks(self.n_x) {
            let line: Vec<String> = row.iter().map(|c| c.code().to_string()).collect();
            let _ = writeln!(out, "{}", line.join(" "));
        }
        out
    }

    pub fn metadata_json(&self) -> serde_json::Value {
        serde_json::json!({ "s": self.s, "n_x": self.n_x, "n_y": self.n_y, "frame_id": self.frame_id })
    }
}

/// Functional form of [`OccupancyGrid::update`].
pub fn update_grid(
    grid: &mut OccupancyGrid,
    points: &[LabeledPoint],
    frame_id: u64,
) -> Result<GridUpdate> {
    grid.update(points, frame_id)
}
