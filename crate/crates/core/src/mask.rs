//! Packed binary rasters and their run-length encoding.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Binary raster with a cached pixel count.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Mask {
    width: usize,
    height: usize,
    words: Vec<u64>,
    area: usize,
}

impl std::fmt::Debug for Mask {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "Mask({}x{}, area={})",
            self.width, self.height, self.area
        )
    }
}

impl Mask {
    pub fn new(width: usize, height: usize) -> Mask {
        Mask {
            width,
            height,
            words: vec![0; (width * height).div_ceil(64)],
            area: 0,
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Mask {
        let mut m = Mask::new(width, height);
        for y in 0..height {
            for x in 0..width {
                if f(x, y) {
                    m.set(x, y);
                }
            }
        }
        m
    }

    pub fn full(width: usize, height: usize) -> Mask {
        Mask::from_fn(width, height, |_, _| true)
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Number of set pixels.
    pub fn area(&self) -> usize {
        self.area
    }

    pub fn is_empty(&self) -> bool {
        self.area == 0
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        let i = y * self.width + x;
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize) {
        debug_assert!(x < self.width && y < self.height);
        let i = y * self.width + x;
        let bit = 1u64 << (i % 64);
        if self.words[i / 64] & bit == 0 {
            self.words[i / 64] |= bit;
            self.area += 1;
        }
    }

    pub fn clear(&mut self, x: usize, y: usize) {
        let i = y * self.width + x;
        let bit = 1u64 << (i % 64);
        if self.words[i / 64] & bit != 0 {
            self.words[i / 64] &= !bit;
            self.area -= 1;
        }
    }

    fn check_dims(&self, other: &Mask) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::DimensionMismatch {
                expected: self.dims(),
                actual: other.dims(),
            });
        }
        Ok(())
    }

    pub fn intersection_area(&self, other: &Mask) -> Result<usize> {
        self.check_dims(other)?;
        Ok(self
            .words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a & b).count_ones() as usize)
            .sum())
    }

    /// `|a ∩ b| / |a ∪ b|`, 0 when both are empty.
    pub fn iou(&self, other: &Mask) -> Result<f64> {
        let inter = self.intersection_area(other)?;
        let union = self.area + other.area - inter;
        Ok(if union == 0 {
            0.0
        } else {
            inter as f64 / union as f64
        })
    }

    pub fn union_with(&mut self, other: &Mask) -> Result<()> {
        self.check_dims(other)?;
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a |= b;
        }
        self.recount();
        Ok(())
    }

    pub fn subtract(&mut self, other: &Mask) -> Result<()> {
        self.check_dims(other)?;
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a &= !b;
        }
        self.recount();
        Ok(())
    }

    fn recount(&mut self) {
        self.area = self.words.iter().map(|w| w.count_ones() as usize).sum();
    }

    /// Set pixels in row-major order.
    pub fn pixels(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let w = self.width;
        self.words.iter().enumerate().flat_map(move |(wi, &word)| {
            let mut bits = word;
            std::iter::from_fn(move || {
                if bits == 0 {
                    return None;
                }
                let b = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                let i = wi * 64 + b;
                Some((i % w, i / w))
            })
        })
    }

    /// Inclusive bounding box `(x0, y0, x1, y1)`; `None` when empty.
    pub fn bbox(&self) -> Option<(usize, usize, usize, usize)> {
        self.pixels().fold(None, |acc, (x, y)| match acc {
            None => Some((x, y, x, y)),
            Some((x0, y0, x1, y1)) => Some((x0.min(x), y0.min(y), x1.max(x), y1.max(y))),
        })
    }

    /// Copy into a `width × height` frame whose origin sits at `offset` relative
    /// to this mask's origin; pixels falling outside are dropped.
    pub fn translated(&self, offset: (i64, i64), width: usize, height: usize) -> Mask {
        let mut out = Mask::new(width, height);
        for (x, y) in self.pixels() {
            let nx = x as i64 - offset.0;
            let ny = y as i64 - offset.1;
            if nx >= 0 && ny >= 0 && (nx as usize) < width && (ny as usize) < height {
                out.set(nx as usize, ny as usize);
            }
        }
        out
    }

    pub fn to_rle(&self) -> Rle {
        let mut counts = Vec::new();
        let mut current = false;
        let mut run = 0u32;
        for i in 0..self.width * self.height {
            let bit = self.words[i / 64] >> (i % 64) & 1 == 1;
            if bit != current {
                counts.push(run);
                run = 0;
                current = bit;
            }
            run += 1;
        }
        counts.push(run);
        Rle {
            width: self.width,
            height: self.height,
            counts,
        }
    }

    pub fn from_rle(rle: &Rle) -> Result<Mask> {
        let total: u64 = rle.counts.iter().map(|c| *c as u64).sum();
        if total != (rle.width * rle.height) as u64 {
            return Err(Error::Format {
                path: "<rle>".into(),
                reason: format!(
                    "runs cover {total} pixels, expected {}",
                    rle.width * rle.height
                ),
            });
        }
        let mut m = Mask::new(rle.width, rle.height);
        let mut i = 0usize;
        for (k, &c) in rle.counts.iter().enumerate() {
            if k % 2 == 1 {
                for j in i..i + c as usize {
                    m.set(j % rle.width, j / rle.width);
                }
            }
            i += c as usize;
        }
        Ok(m)
    }
}

/// Row-major run lengths alternating unset/set, always starting with an unset
/// run (possibly zero).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rle {
    pub width: usize,
    pub height: usize,
    pub counts: Vec<u32>,
}
