//! Raster rendering: terrain classes, numbered mask overlays, collages and
//! simple vector overlays. Output is deterministic for a given input.

use std::io::Cursor;
use std::str::FromStr;

use image::{ImageFormat, Rgb, RgbImage};

use crate::error::{Error, Result};
use crate::mask::Mask;
use crate::segmentation::AnnotatedFrame;
use crate::world::{SensorPatch, TerrainWorld};

/// Composable render layers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Layer {
    Terrain,
    Masks,
    Grid,
    GlobalPath,
    Trajectory,
    Trace,
}

impl FromStr for Layer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Layer> {
        Ok(match s.trim() {
            "terrain" => Layer::Terrain,
            "masks" => Layer::Masks,
            "grid" => Layer::Grid,
            "global_path" | "global-path" => Layer::GlobalPath,
            "trajectory" => Layer::Trajectory,
            "trace" => Layer::Trace,
            other => return Err(Error::UnknownLayer(other.to_string())),
        })
    }
}

/// Parses a comma-separated layer list.
pub fn parse_layers(spec: &str) -> Result<Vec<Layer>> {
    spec.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(str::parse)
        .collect()
}

const MASK_PALETTE: [[u8; 3]; 10] = [
    [230, 25, 75],
    [60, 180, 75],
    [255, 225, 25],
    [0, 130, 200],
    [245, 130, 48],
    [145, 30, 180],
    [70, 240, 240],
    [240, 50, 230],
    [210, 245, 60],
    [250, 190, 212],
];

pub fn mask_color(index: usize) -> [u8; 3] {
    MASK_PALETTE[(index.max(1) - 1) % MASK_PALETTE.len()]
}

// 3×5 glyphs, one row per u8 (low 3 bits, MSB on the left).
const DIGITS: [[u8; 5]; 10] = [
    [0b111, 0b101, 0b101, 0b101, 0b111],
    [0b010, 0b110, 0b010, 0b010, 0b111],
    [0b111, 0b001, 0b111, 0b100, 0b111],
    [0b111, 0b001, 0b111, 0b001, 0b111],
    [0b101, 0b101, 0b111, 0b001, 0b001],
    [0b111, 0b100, 0b111, 0b001, 0b111],
    [0b111, 0b100, 0b111, 0b101, 0b111],
    [0b111, 0b001, 0b010, 0b010, 0b010],
    [0b111, 0b101, 0b111, 0b101, 0b111],
    [0b111, 0b101, 0b111, 0b001, 0b111],
];

/// Mutable raster with helpers for overlays in world or pixel coordinates.
#[derive(Clone)]
pub struct Canvas {
    pub image: RgbImage,
}

impl std::fmt::Debug for Canvas {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Canvas({}x{})", self.image.width(), self.image.height())
    }
}

impl Canvas {
    pub fn new(width: u32, height: u32) -> Canvas {
        Canvas {
            image: RgbImage::new(width, height),
        }
    }

    pub fn put(&mut self, x: i64, y: i64, color: [u8; 3]) {
        if x >= 0 && y >= 0 && (x as u32) < self.image.width() && (y as u32) < self.image.height() {
            self.image.put_pixel(x as u32, y as u32, Rgb(color));
        }
    }

    pub fn blend(&mut self, x: u32, y: u32, color: [u8; 3], alpha: f32) {
        let px = self.image.get_pixel_mut(x, y);
        for (channel, &target) in px.0.iter_mut().zip(&color) {
            *channel = (*channel as f32 * (1.0 - alpha) + target as f32 * alpha).round() as u8;
        }
    }

    pub fn fill_rect(&mut self, x0: i64, y0: i64, w: i64, h: i64, color: [u8; 3]) {
        for y in y0..y0 + h {
            for x in x0..x0 + w {
                self.put(x, y, color);
            }
        }
    }

    pub fn line(&mut self, a: (f64, f64), b: (f64, f64), color: [u8; 3]) {
        let steps = ((b.0 - a.0).abs().max((b.1 - a.1).abs()).ceil() as usize).max(1);
        for i in 0..=steps {
            let t = i as f64 / steps as f64;
            let x = a.0 + (b.0 - a.0) * t;
            let y = a.1 + (b.1 - a.1) * t;
            self.put(x.floor() as i64, y.floor() as i64, color);
        }
    }

    pub fn polyline(&mut self, points: &[(f64, f64)], color: [u8; 3]) {
        for w in points.windows(2) {
            self.line(w[0], w[1], color);
        }
        if let [p] = points {
            self.put(p.0.floor() as i64, p.1.floor() as i64, color);
        }
    }

    /// Draws `n` centered on `(cx, cy)` at `scale` pixels per glyph dot, on a
    /// black backing box.
    pub fn number(&mut self, n: usize, cx: f64, cy: f64, scale: u32) {
        let text = n.to_string();
        let s = scale.max(1) as i64;
        let w = (text.len() as i64 * 4 - 1) * s;
        let h = 5 * s;
        let x0 = cx.round() as i64 - w / 2;
        let y0 = cy.round() as i64 - h / 2;
        self.fill_rect(x0 - s, y0 - s, w + 2 * s, h + 2 * s, [0, 0, 0]);
        for (k, ch) in text.bytes().enumerate() {
            let glyph = DIGITS[(ch - b'0') as usize];
            for (row, bits) in glyph.iter().enumerate() {
                for col in 0..3 {
                    if bits >> (2 - col) & 1 == 1 {
                        let gx = x0 + (k as i64 * 4 + col) * s;
                        let gy = y0 + row as i64 * s;
                        self.fill_rect(gx, gy, s, s, [255, 255, 255]);
                    }
                }
            }
        }
    }

    pub fn png_bytes(&self) -> Result<Vec<u8>> {
        let mut buf = Cursor::new(Vec::new());
        self.image.write_to(&mut buf, ImageFormat::Png)?;
        Ok(buf.into_inner())
    }
}

/// Patch classes, `scale` pixels per cell.
pub fn patch_image(patch: &SensorPatch, scale: u32) -> Canvas {
    let mut c = Canvas::new(patch.width as u32 * scale, patch.height as u32 * scale);
    for py in 0..patch.height {
        for px in 0..patch.width {
            let color = patch.class_at(px, py).color();
            c.fill_rect(
                (px as u32 * scale) as i64,
                (py as u32 * scale) as i64,
                scale as i64,
                scale as i64,
                color,
            );
        }
    }
    c
}

/// Whole-world classes, `scale` pixels per cell.
pub fn world_image(world: &TerrainWorld, scale: u32) -> Canvas {
    let mut c = Canvas::new(world.width as u32 * scale, world.height as u32 * scale);
    for y in 0..world.height {
        for x in 0..world.width {
            let s = scale as i64;
            c.fill_rect(
                x as i64 * s,
                y as i64 * s,
                s,
                s,
                world.class_at(x, y).color(),
            );
        }
    }
    c
}

/// Tints `mask` pixels of a `scale`d canvas.
pub fn tint_mask(canvas: &mut Canvas, mask: &Mask, color: [u8; 3], alpha: f32, scale: u32) {
    for (x, y) in mask.pixels() {
        for dy in 0..scale {
            for dx in 0..scale {
                canvas.blend(x as u32 * scale + dx, y as u32 * scale + dy, color, alpha);
            }
        }
    }
}

/// Patch with translucent masks and their indices drawn at the centroids.
pub fn annotated_image(frame: &AnnotatedFrame, patch: &SensorPatch, scale: u32) -> Result<Canvas> {
    if frame.dims() != patch.dims() {
        return Err(Error::DimensionMismatch {
            expected: patch.dims(),
            actual: frame.dims(),
        });
    }
    let mut c = patch_image(patch, scale);
    for m in &frame.masks {
        tint_mask(&mut c, &m.mask, mask_color(m.index), 0.45, scale);
    }
    let glyph = (scale / 2).max(1);
    for m in &frame.masks {
        let (x, y) = m.centroid;
        c.number(
            m.index,
            (x + 0.5) * scale as f64,
            (y + 0.5) * scale as f64,
            glyph,
        );
    }
    Ok(c)
}

/// `[left | right]`, top-aligned.
pub fn hconcat(left: &Canvas, right: &Canvas) -> Canvas {
    let (lw, lh) = left.image.dimensions();
    let (rw, rh) = right.image.dimensions();
    let mut out = Canvas::new(lw + rw, lh.max(rh));
    image::imageops::replace(&mut out.image, &left.image, 0, 0);
    image::imageops::replace(&mut out.image, &right.image, lw as i64, 0);
    out
}

/// White-on-black binary mask.
pub fn mask_image(mask: &Mask, scale: u32) -> Canvas {
    let mut c = Canvas::new(mask.width() as u32 * scale, mask.height() as u32 * scale);
    for (x, y) in mask.pixels() {
        let s = scale as i64;
        c.fill_rect(x as i64 * s, y as i64 * s, s, s, [255, 255, 255]);
    }
    c
}
