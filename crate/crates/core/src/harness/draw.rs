//! Layered rasters of run logs and stored frames.

use crate::error::Result;
use crate::mapping::CellState;
use crate::render::{self, Canvas, Layer};
use crate::world::TerrainWorld;

use super::frames::StoredFrame;
use super::run::RunLog;

/// Renders a run over its world. `masks` does not apply to runs and is ignored.
pub fn render_run(world: &TerrainWorld, log: &RunLog, layers: &[Layer], scale: u32) -> Canvas {
    let mut c = if layers.contains(&Layer::Terrain) {
        render::world_image(world, scale)
    } else {
        Canvas::new(world.width as u32 * scale, world.height as u32 * scale)
    };
    let to_px = |x: f64, y: f64| {
        (
            x / world.cell_size * scale as f64,
            y / world.cell_size * scale as f64,
        )
    };
    if layers.contains(&Layer::Grid) {
        let g = &log.grid;
        let gs = g.s / world.cell_size * scale as f64;
        for cy in 0..g.n_y {
            for cx in 0..g.n_x {
                let color = match g.get(cx, cy) {
                    CellState::Free => [0, 200, 0],
                    CellState::Occupied => [200, 0, 0],
                    CellState::Unknown => continue,
                };
                let (x0, y0) = ((cx as f64 * gs) as u32, (cy as f64 * gs) as u32);
                let (x1, y1) = (
                    (((cx + 1) as f64) * gs) as u32,
                    (((cy + 1) as f64) * gs) as u32,
                );
                for y in y0..y1.min(c.image.height()) {
                    for x in x0..x1.min(c.image.width()) {
                        c.blend(x, y, color, 0.35);
                    }
                }
            }
        }
    }
    if layers.contains(&Layer::GlobalPath) {
        let s = log.grid.s;
        let pts: Vec<(f64, f64)> = log
            .summary
            .global_path
            .iter()
            .map(|&(x, y)| to_px((x as f64 + 0.5) * s, (y as f64 + 0.5) * s))
            .collect();
        c.polyline(&pts, [255, 255, 0]);
    }
    if layers.contains(&Layer::Trajectory) {
        let pts: Vec<(f64, f64)> = log
            .summary
            .last_trajectory
            .iter()
            .map(|p| to_px(p[0], p[1]))
            .collect();
        c.polyline(&pts, [0, 255, 255]);
    }
    if layers.contains(&Layer::Trace) {
        let pts: Vec<(f64, f64)> = log.trace().into_iter().map(|(x, y)| to_px(x, y)).collect();
        c.polyline(&pts, [255, 0, 255]);
    }
    c
}

/// Renders a stored frame: terrain classes and/or numbered masks.
pub fn render_frame(frame: &StoredFrame, layers: &[Layer], scale: u32) -> Result<Canvas> {
    let annotated = frame.annotated()?;
    let mut c = if layers.contains(&Layer::Terrain) {
        render::patch_image(&frame.patch, scale)
    } else {
        Canvas::new(
            frame.patch.width as u32 * scale,
            frame.patch.height as u32 * scale,
        )
    };
    if layers.contains(&Layer::Masks) {
        for m in &annotated.masks {
            render::tint_mask(&mut c, &m.mask, render::mask_color(m.index), 0.45, scale);
        }
        let glyph = (scale / 2).max(1);
        for m in &annotated.masks {
            c.number(
                m.index,
                (m.centroid.0 + 0.5) * scale as f64,
                (m.centroid.1 + 0.5) * scale as f64,
                glyph,
            );
        }
    }
    Ok(c)
}
