//! Synthetic terrain world, kinematic bicycle vehicle, and the viewport sensor.
//!
//! The world is a dense row-major grid of [`TerrainClass`] cells. Cell `(cx, cy)`
//! covers `[cx·cell_size, (cx+1)·cell_size) × [cy·cell_size, (cy+1)·cell_size)`
//! in world meters; headings are measured from +x towards +y.

use std::collections::VecDeque;
use std::fmt;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::control::ControlCommand;
use crate::error::{Error, Result};

/// Closed set of terrain classes. Discriminants are the on-disk byte values.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[repr(u8)]
pub enum TerrainClass {
    Dirt = 0,
    Sand = 1,
    Asphalt = 2,
    Gravel = 3,
    Mulch = 4,
    Concrete = 5,
    Rockbed = 6,
    PatchyGrass = 7,
    DenseGrass = 8,
    Rocks = 9,
    Water = 10,
    Obstacle = 11,
}

impl TerrainClass {
    pub const ALL: [TerrainClass; 12] = [
        TerrainClass::Dirt,
        TerrainClass::Sand,
        TerrainClass::Asphalt,
        TerrainClass::Gravel,
        TerrainClass::Mulch,
        TerrainClass::Concrete,
        TerrainClass::Rockbed,
        TerrainClass::PatchyGrass,
        TerrainClass::DenseGrass,
        TerrainClass::Rocks,
        TerrainClass::Water,
        TerrainClass::Obstacle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TerrainClass::Dirt => "dirt",
            TerrainClass::Sand => "sand",
            TerrainClass::Asphalt => "asphalt",
            TerrainClass::Gravel => "gravel",
            TerrainClass::Mulch => "mulch",
            TerrainClass::Concrete => "concrete",
            TerrainClass::Rockbed => "rockbed",
            TerrainClass::PatchyGrass => "patchy_grass",
            TerrainClass::DenseGrass => "dense_grass",
            TerrainClass::Rocks => "rocks",
            TerrainClass::Water => "water",
            TerrainClass::Obstacle => "obstacle",
        }
    }

    /// Human-readable form used in prompt text ("patchy grass").
    pub fn prose(self) -> String {
        self.name().replace('_', " ")
    }

    pub fn from_byte(b: u8) -> Option<TerrainClass> {
        TerrainClass::ALL.get(b as usize).copied()
    }

    /// Display color used by every raster renderer.
    pub fn color(self) -> [u8; 3] {
        match self {
            TerrainClass::Dirt => [150, 111, 51],
            TerrainClass::Sand => [222, 200, 140],
            TerrainClass::Asphalt => [70, 70, 75],
            TerrainClass::Gravel => [160, 160, 150],
            TerrainClass::Mulch => [110, 70, 40],
            TerrainClass::Concrete => [190, 190, 185],
            TerrainClass::Rockbed => [130, 120, 110],
            TerrainClass::PatchyGrass => [120, 160, 70],
            TerrainClass::DenseGrass => [40, 110, 40],
            TerrainClass::Rocks => [95, 90, 85],
            TerrainClass::Water => [50, 90, 170],
            TerrainClass::Obstacle => [20, 45, 20],
        }
    }
}

impl fmt::Display for TerrainClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TerrainClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace([' ', '-'], "_");
        TerrainClass::ALL
            .into_iter()
            .find(|c| c.name() == norm)
            .ok_or_else(|| Error::Config(format!("unknown terrain class `{s}`")))
    }
}

/// A subset of [`TerrainClass`], stored as a bit set.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct ClassSet(u16);

impl ClassSet {
    pub const EMPTY: ClassSet = ClassSet(0);

    /// Drivable surfaces named in the default full-context prompt.
    pub fn default_drivable() -> ClassSet {
        [
            TerrainClass::Dirt,
            TerrainClass::Sand,
            TerrainClass::Asphalt,
            TerrainClass::Gravel,
            TerrainClass::Mulch,
            TerrainClass::Concrete,
            TerrainClass::Rockbed,
        ]
        .into_iter()
        .collect()
    }

    pub fn contains(self, class: TerrainClass) -> bool {
        self.0 & (1 << class as u8) != 0
    }

    pub fn insert(&mut self, class: TerrainClass) {
        self.0 |= 1 << class as u8;
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    /// Members in declaration order.
    pub fn iter(self) -> impl Iterator<Item = TerrainClass> {
        TerrainClass::ALL
            .into_iter()
            .filter(move |c| self.contains(*c))
    }
}

impl FromIterator<TerrainClass> for ClassSet {
    fn from_iter<I: IntoIterator<Item = TerrainClass>>(iter: I) -> Self {
        let mut set = ClassSet::EMPTY;
        for c in iter {
            set.insert(c);
        }
        set
    }
}

impl Serialize for ClassSet {
    fn serialize<S: serde::Serializer>(
        &self,
        serializer: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_seq(self.iter())
    }
}

impl<'de> Deserialize<'de> for ClassSet {
    fn deserialize<D: serde::Deserializer<'de>>(
        deserializer: D,
    ) -> std::result::Result<Self, D::Error> {
        let classes = Vec::<TerrainClass>::deserialize(deserializer)?;
        Ok(classes.into_iter().collect())
    }
}

/// Axis-aligned cell rectangle, `[x0, x1) × [y0, y1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Region {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl Region {
    pub fn contains(&self, cx: usize, cy: usize) -> bool {
        cx >= self.x0 && cx < self.x1 && cy >= self.y0 && cy < self.y1
    }

    pub fn center_cell(&self) -> (usize, usize) {
        ((self.x0 + self.x1) / 2, (self.y0 + self.y1) / 2)
    }

    pub fn cells(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (self.y0..self.y1).flat_map(move |y| (self.x0..self.x1).map(move |x| (x, y)))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Anchors {
    pub start: Region,
    pub goal: Region,
}

/// Dense terrain grid; the simulated environment and the ground-truth source.
#[derive(Clone, Debug, PartialEq)]
pub struct TerrainWorld {
    pub width: usize,
    pub height: usize,
    /// Meters per cell.
    pub cell_size: f64,
    pub cells: Vec<TerrainClass>,
    pub drivable_classes: ClassSet,
    pub anchors: Anchors,
    /// Cells that look like terrain but end a run on entry (ditch analog).
    pub hazards: Vec<Region>,
}

impl TerrainWorld {
    pub fn filled(
        width: usize,
        height: usize,
        cell_size: f64,
        class: TerrainClass,
    ) -> TerrainWorld {
        let anchor = Region {
            x0: 0,
            y0: 0,
            x1: width.min(1),
            y1: height.min(1),
        };
        TerrainWorld {
            width,
            height,
            cell_size,
            cells: vec![class; width * height],
            drivable_classes: ClassSet::default_drivable(),
            anchors: Anchors {
                start: anchor,
                goal: anchor,
            },
            hazards: Vec::new(),
        }
    }

    #[inline]
    pub fn class_at(&self, cx: usize, cy: usize) -> TerrainClass {
        self.cells[cy * self.width + cx]
    }

    pub fn set(&mut self, cx: usize, cy: usize, class: TerrainClass) {
        self.cells[cy * self.width + cx] = class;
    }

    pub fn is_drivable_cell(&self, cx: usize, cy: usize) -> bool {
        self.drivable_classes.contains(self.class_at(cx, cy))
    }

    /// Hazard regions only count where the corridor did not repaint them.
    pub fn is_hazard(&self, cx: usize, cy: usize) -> bool {
        !self.is_drivable_cell(cx, cy) && self.hazards.iter().any(|r| r.contains(cx, cy))
    }

    pub fn extent(&self) -> (f64, f64) {
        (
            self.width as f64 * self.cell_size,
            self.height as f64 * self.cell_size,
        )
    }

    /// Cell containing the world point, or `None` outside the world.
    pub fn cell_of(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        if !(x.is_finite() && y.is_finite()) || x < 0.0 || y < 0.0 {
            return None;
        }
        let cx = (x / self.cell_size).floor() as usize;
        let cy = (y / self.cell_size).floor() as usize;
        (cx < self.width && cy < self.height).then_some((cx, cy))
    }

    pub fn cell_center(&self, cx: usize, cy: usize) -> (f64, f64) {
        (
            (cx as f64 + 0.5) * self.cell_size,
            (cy as f64 + 0.5) * self.cell_size,
        )
    }

    /// 4-connected flood over drivable, non-hazard cells.
    pub fn drivable_connected(&self, from: (usize, usize), to: (usize, usize)) -> bool {
        let passable = |x: usize, y: usize| self.is_drivable_cell(x, y) && !self.is_hazard(x, y);
        if !passable(from.0, from.1) || !passable(to.0, to.1) {
            return false;
        }
        let mut seen = vec![false; self.cells.len()];
        let mut queue = VecDeque::from([from]);
        seen[from.1 * self.width + from.0] = true;
        while let Some((x, y)) = queue.pop_front() {
            if (x, y) == to {
                return true;
            }
            for (nx, ny) in neighbors4(x, y, self.width, self.height) {
                let i = ny * self.width + nx;
                if !seen[i] && passable(nx, ny) {
                    seen[i] = true;
                    queue.push_back((nx, ny));
                }
            }
        }
        false
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::with_capacity(WORLD_HEADER_LEN + self.cells.len());
        buf.extend_from_slice(WORLD_MAGIC);
        buf.extend_from_slice(&(self.width as u32).to_le_bytes());
        buf.extend_from_slice(&(self.height as u32).to_le_bytes());
        buf.extend_from_slice(&self.cell_size.to_le_bytes());
        buf.extend(self.cells.iter().map(|c| *c as u8));
        fs::File::create(path)?.write_all(&buf)?;

        let sidecar = WorldSidecar {
            drivable_classes: self.drivable_classes,
            anchors: self.anchors,
            hazards: self.hazards.clone(),
        };
        fs::write(sidecar_path(path), serde_json::to_string_pretty(&sidecar)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<TerrainWorld> {
        let bad = |reason: &str| Error::Format {
            path: path.display().to_string(),
            reason: reason.into(),
        };
        let mut bytes = Vec::new();
        fs::File::open(path)?.read_to_end(&mut bytes)?;
        if bytes.len() < WORLD_HEADER_LEN || &bytes[..5] != WORLD_MAGIC {
            return Err(bad("missing OFRW1 header"));
        }
        let width = u32::from_le_bytes(bytes[5..9].try_into().unwrap()) as usize;
        let height = u32::from_le_bytes(bytes[9..13].try_into().unwrap()) as usize;
        let cell_size = f64::from_le_bytes(bytes[13..21].try_into().unwrap());
        if width == 0 || height == 0 || !(cell_size > 0.0 && cell_size.is_finite()) {
            return Err(bad("invalid dimensions"));
        }
        let body = &bytes[WORLD_HEADER_LEN..];
        if body.len() != width * height {
            return Err(bad("cell count does not match header"));
        }
        let cells = body
            .iter()
            .map(|b| TerrainClass::from_byte(*b).ok_or_else(|| bad("invalid class byte")))
            .collect::<Result<Vec<_>>>()?;

        let sidecar: WorldSidecar = match fs::read_to_string(sidecar_path(path)) {
            Ok(text) => serde_json::from_str(&text)?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => WorldSidecar {
                drivable_classes: ClassSet::default_drivable(),
                anchors: TerrainWorld::filled(1, 1, 1.0, TerrainClass::Dirt).anchors,
                hazards: Vec::new(),
            },
            Err(e) => return Err(e.into()),
        };
        Ok(TerrainWorld {
            width,
            height,
            cell_size,
            cells,
            drivable_classes: sidecar.drivable_classes,
            anchors: sidecar.anchors,
            hazards: sidecar.hazards,
        })
    }
}

const WORLD_MAGIC: &[u8; 5] = b"OFRW1";
const WORLD_HEADER_LEN: usize = 5 + 4 + 4 + 8;

#[derive(Serialize, Deserialize)]
struct WorldSidecar {
    drivable_classes: ClassSet,
    anchors: Anchors,
    #[serde(default)]
    hazards: Vec<Region>,
}

/// `world.ofrw` → `world.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

pub fn neighbors4(x: usize, y: usize, w: usize, h: usize) -> impl Iterator<Item = (usize, usize)> {
    let mut out = [(usize::MAX, usize::MAX); 4];
    if x > 0 {
        out[0] = (x - 1, y);
    }
    if x + 1 < w {
        out[1] = (x + 1, y);
    }
    if y > 0 {
        out[2] = (x, y - 1);
    }
    if y + 1 < h {
        out[3] = (x, y + 1);
    }
    out.into_iter().filter(|p| p.0 != usize::MAX)
}

/// Non-drivable terrain region painted before the corridor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HazardSpec {
    /// `[x0, y0, x1, y1]` as fractions of the world size.
    pub region: [f64; 4],
    #[serde(default = "default_hazard_class")]
    pub class: TerrainClass,
}

fn default_hazard_class() -> TerrainClass {
    TerrainClass::Water
}

/// World-generation parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldSpec {
    pub width: usize,
    pub height: usize,
    pub cell_size: f64,
    /// Corridor width in cells.
    pub corridor_width: usize,
    /// When false the corridor is cut by an obstacle wall.
    pub feasible: bool,
    /// Fill every cell with one class and skip corridor carving.
    pub fill: Option<TerrainClass>,
    /// Explicit corridor polyline as world-size fractions; random when absent.
    pub waypoints: Option<Vec<[f64; 2]>>,
    /// Extra corridor polylines (world-size fractions) painted like the main one.
    pub branches: Vec<Vec<[f64; 2]>>,
    /// Random intermediate waypoints when `waypoints` is absent.
    pub bends: usize,
    /// Probability of a single-cell clutter obstacle in the background.
    pub clutter: f64,
    /// Number of background blobs (rocks, water, patchy grass, trees).
    pub blobs: usize,
    /// Paint consecutive corridor legs with alternating drivable surfaces.
    pub mixed_surfaces: bool,
    pub hazard: Option<HazardSpec>,
    pub drivable_classes: Option<Vec<TerrainClass>>,
}

impl Default for WorldSpec {
    fn default() -> Self {
        WorldSpec {
            width: 96,
            height: 96,
            cell_size: 1.0,
            corridor_width: 8,
            feasible: true,
            fill: None,
            waypoints: None,
            branches: Vec::new(),
            bends: 2,
            clutter: 0.01,
            blobs: 12,
            mixed_surfaces: false,
            hazard: None,
            drivable_classes: None,
        }
    }
}

impl WorldSpec {
    fn validate(&self) -> Result<()> {
        if self.width < 32 || self.height < 32 {
            return Err(Error::InvalidWorldSpec(format!(
                "world must be at least 32x32, got {}x{}",
                self.width, self.height
            )));
        }
        if self.corridor_width < 3 {
            return Err(Error::InvalidWorldSpec(
                "corridor width must be at least 3 cells".into(),
            ));
        }
        if self.corridor_width >= self.width.min(self.height) {
            return Err(Error::InvalidWorldSpec(format!(
                "corridor width {} does not fit a {}x{} world",
                self.corridor_width, self.width, self.height
            )));
        }
        if !(self.cell_size > 0.0 && self.cell_size.is_finite()) {
            return Err(Error::InvalidWorldSpec("cell_size must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.clutter) {
            return Err(Error::InvalidWorldSpec("clutter must lie in [0, 1]".into()));
        }
        if let Some(wps) = &self.waypoints {
            if wps.len() < 2 {
                return Err(Error::InvalidWorldSpec(
                    "need at least two waypoints".into(),
                ));
            }
            if wps.iter().flatten().any(|f| !(0.0..=1.0).contains(f)) {
                return Err(Error::InvalidWorldSpec(
                    "waypoints are fractions in [0, 1]".into(),
                ));
            }
        }
        for branch in &self.branches {
            if branch.len() < 2 || branch.iter().flatten().any(|f| !(0.0..=1.0).contains(f)) {
                return Err(Error::InvalidWorldSpec(
                    "branches need two or more fractional waypoints".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Generates a deterministic terrain world for `seed`.
///
/// A feasible world carries a 4-connected drivable corridor joining the start
/// and goal anchors; an infeasible one has the corridor cut by an obstacle wall.
pub fn generate_world(seed: u64, spec: &WorldSpec) -> Result<TerrainWorld> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (spec.width, spec.height);
    let mut world = TerrainWorld::filled(
        w,
        h,
        spec.cell_size,
        spec.fill.unwrap_or(TerrainClass::DenseGrass),
    );
    if let Some(classes) = &spec.drivable_classes {
        world.drivable_classes = classes.iter().copied().collect();
    }

    let half = spec.corridor_width as f64 / 2.0;
    let margin = (half + 1.0).ceil();
    let to_world = |wps: &[[f64; 2]]| -> Vec<(f64, f64)> {
        wps.iter()
            .map(|[fx, fy]| {
                (
                    (fx * w as f64).clamp(margin, w as f64 - margin),
                    (fy * h as f64).clamp(margin, h as f64 - margin),
                )
            })
            .collect()
    };
    let polyline: Vec<(f64, f64)> = match &spec.waypoints {
        Some(wps) => to_world(wps),
        None => {
            let span = w as f64 - 2.0 * margin;
            let n = spec.bends + 2;
            (0..n)
                .map(|i| {
                    let x = margin + span * i as f64 / (n - 1) as f64;
                    let y = rng.random_range(margin..=h as f64 - margin);
                    (x, y)
                })
                .collect()
        }
    };
    let anchor_at = |(x, y): (f64, f64)| {
        let r = (half / 2.0).max(1.0);
        Region {
            x0: (x - r).max(0.0) as usize,
            y0: (y - r).max(0.0) as usize,
            x1: ((x + r).ceil() as usize).min(w),
            y1: ((y + r).ceil() as usize).min(h),
        }
    };
    world.anchors = Anchors {
        start: anchor_at(polyline[0]),
        goal: anchor_at(*polyline.last().unwrap()),
    };

    if spec.fill.is_some() {
        return Ok(world);
    }

    const BLOB_CLASSES: [TerrainClass; 4] = [
        TerrainClass::Rocks,
        TerrainClass::Water,
        TerrainClass::PatchyGrass,
        TerrainClass::Obstacle,
    ];
    for _ in 0..spec.blobs {
        let cx = rng.random_range(0.0..w as f64);
        let cy = rng.random_range(0.0..h as f64);
        let r = rng.random_range(2.0..(w.min(h) as f64 / 8.0).max(3.0));
        let class = BLOB_CLASSES[rng.random_range(0..BLOB_CLASSES.len())];
        paint_disk(&mut world, cx, cy, r, class);
    }
    for i in 0..world.cells.len() {
        if rng.random_bool(spec.clutter) {
            world.cells[i] = if rng.random_bool(0.5) {
                TerrainClass::Rocks
            } else {
                TerrainClass::Obstacle
            };
        }
    }

    if let Some(hazard) = &spec.hazard {
        let [fx0, fy0, fx1, fy1] = hazard.region;
        let region = Region {
            x0: (fx0 * w as f64) as usize,
            y0: (fy0 * h as f64) as usize,
            x1: ((fx1 * w as f64) as usize).min(w),
            y1: ((fy1 * h as f64) as usize).min(h),
        };
        for (x, y) in region.cells() {
            world.set(x, y, hazard.class);
        }
        world.hazards.push(region);
    }

    const SURFACES: [TerrainClass; 3] =
        [TerrainClass::Dirt, TerrainClass::Gravel, TerrainClass::Sand];
    let drivable = world.drivable_classes;
    let corridor_class = |leg: usize| {
        let candidates: Vec<TerrainClass> = if spec.mixed_surfaces {
            vec![SURFACES[leg % SURFACES.len()]]
        } else {
            vec![TerrainClass::Dirt]
        };
        candidates
            .into_iter()
            .find(|c| drivable.contains(*c))
            .or_else(|| drivable.iter().next())
            .unwrap_or(TerrainClass::Dirt)
    };
    let branches: Vec<Vec<(f64, f64)>> = spec.branches.iter().map(|b| to_world(b)).collect();
    let legs = polyline
        .windows(2)
        .chain(branches.iter().flat_map(|b| b.windows(2)));
    for (leg, pair) in legs.enumerate() {
        let (a, b) = (pair[0], pair[1]);
        let len = ((b.0 - a.0).powi(2) + (b.1 - a.1).powi(2)).sqrt();
        let steps = (len / 0.5).ceil().max(1.0) as usize;
        for s in 0..=steps {
            let t = s as f64 / steps as f64;
            paint_disk(
                &mut world,
                a.0 + (b.0 - a.0) * t,
                a.1 + (b.1 - a.1) * t,
                half,
                corridor_class(leg),
            );
        }
    }
    let start = world.anchors.start.center_cell();
    let goal = world.anchors.goal.center_cell();
    if spec.feasible {
        if !world.drivable_connected(start, goal) {
            return Err(Error::InvalidWorldSpec(
                "corridor failed to connect the anchors".into(),
            ));
        }
        for b in &branches {
            let end = b[b.len() - 1];
            if !world.drivable_connected(start, (end.0 as usize, end.1 as usize)) {
                return Err(Error::InvalidWorldSpec(
                    "branch does not connect to the start".into(),
                ));
            }
        }
    } else {
        // Cut the corridor halfway along its arc length, growing the wall until disconnected.
        let (mx, my) = polyline_midpoint(&polyline);
        let mut radius = spec.corridor_width as f64;
        while world.drivable_connected(start, goal) {
            paint_disk(&mut world, mx, my, radius, TerrainClass::Obstacle);
            radius += 1.0;
            if radius > (w.max(h)) as f64 {
                break;
            }
        }
    }
    Ok(world)
}

fn polyline_midpoint(poly: &[(f64, f64)]) -> (f64, f64) {
    let seg_len = |a: (f64, f64), b: (f64, f64)| ((b.0 - a.0).powi(2) + (b.1 - a.1).powi(2)).sqrt();
    let total: f64 = poly.windows(2).map(|p| seg_len(p[0], p[1])).sum();
    let mut remaining = total / 2.0;
    for p in poly.windows(2) {
        let l = seg_len(p[0], p[1]);
        if remaining <= l && l > 0.0 {
            let t = remaining / l;
            return (
                p[0].0 + (p[1].0 - p[0].0) * t,
                p[0].1 + (p[1].1 - p[0].1) * t,
            );
        }
        remaining -= l;
    }
    poly[0]
}

fn paint_disk(world: &mut TerrainWorld, cx: f64, cy: f64, r: f64, class: TerrainClass) {
    let x0 = (cx - r).floor().max(0.0) as usize;
    let y0 = (cy - r).floor().max(0.0) as usize;
    let x1 = ((cx + r).ceil() as usize).min(world.width.saturating_sub(1));
    let y1 = ((cy + r).ceil() as usize).min(world.height.saturating_sub(1));
    for y in y0..=y1 {
        for x in x0..=x1 {
            let dx = x as f64 + 0.5 - cx;
            let dy = y as f64 + 0.5 - cy;
            if dx * dx + dy * dy <= r * r {
                world.set(x, y, class);
            }
        }
    }
}

/// Mechanical limits of the vehicle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VehicleParams {
    pub wheelbase: f64,
    pub delta_max: f64,
    pub accel_min: f64,
    pub accel_max: f64,
    pub v_max: f64,
}

impl Default for VehicleParams {
    // Placeholder values; the reference vehicle has no published parameters.
    fn default() -> Self {
        VehicleParams {
            wheelbase: 2.3,
            delta_max: 0.6,
            accel_min: -3.0,
            accel_max: 2.0,
            v_max: 8.0,
        }
    }
}

impl VehicleParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.wheelbase > 0.0
            && self.delta_max > 0.0
            && self.delta_max < std::f64::consts::FRAC_PI_2
            && self.accel_min < 0.0
            && self.accel_max > 0.0
            && self.v_max > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "invalid vehicle parameters {self:?}"
            )))
        }
    }

    /// Radius of the tightest turn, `wheelbase / tan(delta_max)`.
    pub fn min_turn_radius(&self) -> f64 {
        self.wheelbase / self.delta_max.tan()
    }
}

/// Kinematic bicycle state; `theta` stays in `(-π, π]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VehiclePose {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub v: f64,
}

impl VehiclePose {
    pub fn new(x: f64, y: f64, theta: f64, v: f64) -> VehiclePose {
        VehiclePose {
            x,
            y,
            theta: wrap_angle(theta),
            v,
        }
    }

    pub fn distance_to(&self, x: f64, y: f64) -> f64 {
        (self.x - x).hypot(self.y - y)
    }
}

/// Wraps an angle into `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    let w = a.rem_euclid(TAU);
    if w > PI {
        w - TAU
    } else {
        w
    }
}

/// Forward-Euler step of the kinematic bicycle model.
pub fn step_vehicle(
    pose: &VehiclePose,
    cmd: &ControlCommand,
    dt: f64,
    params: &VehicleParams,
) -> Result<VehiclePose> {
    let inputs = [pose.x, pose.y, pose.theta, pose.v, cmd.delta, cmd.accel, dt];
    if inputs.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("step_vehicle input"));
    }
    if dt <= 0.0 {
        return Err(Error::Config("dt must be positive".into()));
    }
    let delta = cmd.delta.clamp(-params.delta_max, params.delta_max);
    let (sin, cos) = pose.theta.sin_cos();
    Ok(VehiclePose {
        x: pose.x + pose.v * cos * dt,
        y: pose.y + pose.v * sin * dt,
        theta: wrap_angle(pose.theta + pose.v / params.wheelbase * delta.tan() * dt),
        v: (pose.v + cmd.accel * dt).clamp(0.0, params.v_max),
    })
}

/// A clipped window of ground-truth classes around the vehicle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensorPatch {
    pub frame_id: u64,
    /// World cell of the patch's `(0, 0)` pixel.
    pub origin: (usize, usize),
    pub width: usize,
    pub height: usize,
    pub cell_size: f64,
    pub classes: Vec<TerrainClass>,
}

impl SensorPatch {
    #[inline]
    pub fn class_at(&self, px: usize, py: usize) -> TerrainClass {
        self.classes[py * self.width + px]
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    /// World-meter center of patch pixel `(px, py)`.
    pub fn pixel_center(&self, px: usize, py: usize) -> (f64, f64) {
        (
            (self.origin.0 + px) as f64 * self.cell_size + 0.5 * self.cell_size,
            (self.origin.1 + py) as f64 * self.cell_size + 0.5 * self.cell_size,
        )
    }

    /// Patch built from an explicit class raster; origin at world cell (0, 0).
    pub fn from_classes(
        frame_id: u64,
        width: usize,
        height: usize,
        classes: Vec<TerrainClass>,
    ) -> SensorPatch {
        assert_eq!(classes.len(), width * height, "class raster size");
        SensorPatch {
            frame_id,
            origin: (0, 0),
            width,
            height,
            cell_size: 1.0,
            classes,
        }
    }
}

/// Window placement shared by every capture: a `window`-sided square centered a
/// quarter window ahead of the vehicle cell, clipped to the world.
pub fn capture_patch_with_id(
    world: &TerrainWorld,
    pose: &VehiclePose,
    window: usize,
    frame_id: u64,
) -> Result<SensorPatch> {
    if window == 0 {
        return Err(Error::Config("sensor window must be at least 1".into()));
    }
    let (vx, vy) = world
        .cell_of(pose.x, pose.y)
        .ok_or(Error::PoseOutsideWorld {
            x: pose.x,
            y: pose.y,
        })?;
    let lead = window as f64 / 4.0;
    let cx = vx as f64 + (lead * pose.theta.cos()).round();
    let cy = vy as f64 + (lead * pose.theta.sin()).round();
    let x0 = cx as i64 - (window / 2) as i64;
    let y0 = cy as i64 - (window / 2) as i64;
    let clip = |lo: i64, len: usize| {
        let a = lo.clamp(0, len as i64) as usize;
        let b = (lo + window as i64).clamp(0, len as i64) as usize;
        (a, b)
    };
    let (ax, bx) = clip(x0, world.width);
    let (ay, by) = clip(y0, world.height);
    let (pw, ph) = (bx - ax, by - ay);
    let mut classes = Vec::with_capacity(pw * ph);
    for y in ay..by {
        classes.extend_from_slice(&world.cells[y * world.width + ax..y * world.width + bx]);
    }
    Ok(SensorPatch {
        frame_id,
        origin: (ax, ay),
        width: pw,
        height: ph,
        cell_size: world.cell_size,
        classes,
    })
}

/// Perfect forward-facing sensor with a monotone frame counter.
#[derive(Clone, Debug, Default)]
pub struct Sensor {
    next_frame: u64,
}

impl Sensor {
    pub fn new() -> Sensor {
        Sensor::default()
    }

    pub fn capture_patch(
        &mut self,
        world: &TerrainWorld,
        pose: &VehiclePose,
        window: usize,
    ) -> Result<SensorPatch> {
        let patch = capture_patch_with_id(world, pose, window, self.next_frame)?;
        self.next_frame += 1;
        Ok(patch)
    }
}
