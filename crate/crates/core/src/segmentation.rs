//! Point-prompted mask extraction, IoU merging, area filtering, centroid
//! annotation and overlap-based tracking.
//!
//! The extractor stands in for a promptable segmenter: a prompt point selects
//! the 4-connected component of cells sharing the class under that point.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::Mask;
use crate::world::SensorPatch;

/// Frames between forced track resets.
pub const TRACK_RESET_FRAMES: u32 = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Margins {
    pub min: usize,
    pub max: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PromptGrid {
    /// Row-major `(x, y)` pixel coordinates.
    pub points: Vec<(usize, usize)>,
    pub margins: Margins,
}

/// `n_side²` points spaced uniformly over `[min, dim - max]` on each axis.
pub fn generate_prompt_grid(
    dims: (usize, usize),
    n_side: usize,
    margins: Margins,
) -> Result<PromptGrid> {
    if n_side == 0 {
        return Err(Error::InvalidPromptGrid(
            "grid side must be at least 1".into(),
        ));
    }
    let axis = |dim: usize| -> Result<Vec<usize>> {
        let hi = dim
            .checked_sub(margins.max)
            .map(|h| h.min(dim.saturating_sub(1)));
        match hi {
            Some(hi) if dim > 0 && margins.min <= hi => {
                let lo = margins.min as f64;
                let span = hi as f64 - lo;
                Ok((0..n_side)
                    .map(|i| {
                        if n_side == 1 {
                            (lo + span / 2.0).round() as usize
                        } else {
                            (lo + span * i as f64 / (n_side - 1) as f64).round() as usize
                        }
                    })
                    .collect())
            }
            _ => Err(Error::InvalidPromptGrid(format!(
                "margins {}/{} leave no interior in a dimension of {dim}",
                margins.min, margins.max
            ))),
        }
    };
    let xs = axis(dims.0)?;
    let ys = axis(dims.1)?;
    let points = ys
        .iter()
        .flat_map(|&y| xs.iter().map(move |&x| (x, y)))
        .collect();
    Ok(PromptGrid { points, margins })
}

/// Flood-fills the 4-connected same-class component containing `seed`,
/// writing `label` into `labels`.
fn flood_component(
    patch: &SensorPatch,
    seed: (usize, usize),
    label: u32,
    labels: &mut [u32],
) -> Mask {
    let (w, h) = patch.dims();
    let class = patch.class_at(seed.0, seed.1);
    let mut mask = Mask::new(w, h);
    let mut stack = vec![seed];
    labels[seed.1 * w + seed.0] = label;
    while let Some((x, y)) = stack.pop() {
        mask.set(x, y);
        for (nx, ny) in crate::world::neighbors4(x, y, w, h) {
            let i = ny * w + nx;
            if labels[i] == 0 && patch.classes[i] == class {
                labels[i] = label;
                stack.push((nx, ny));
            }
        }
    }
    mask
}

/// One mask per prompt point. Points landing in an already-visited component
/// reuse its mask, so duplicates are emitted and left for merging.
pub fn extract_masks(patch: &SensorPatch, grid: &PromptGrid) -> Result<Vec<Mask>> {
    let (w, h) = patch.dims();
    if let Some(&(x, y)) = grid.points.iter().find(|(x, y)| *x >= w || *y >= h) {
        return Err(Error::InvalidPromptGrid(format!(
            "point ({x}, {y}) outside {w}x{h} patch"
        )));
    }
    let mut labels = vec![0u32; w * h];
    let mut components: Vec<Mask> = Vec::new();
    let mut out = Vec::with_capacity(grid.points.len());
    for &(x, y) in &grid.points {
        let label = labels[y * w + x];
        if label == 0 {
            let mask = flood_component(patch, (x, y), components.len() as u32 + 1, &mut labels);
            components.push(mask);
            out.push(components.last().unwrap().clone());
        } else {
            out.push(components[label as usize - 1].clone());
        }
    }
    Ok(out)
}

/// Every 4-connected component of the patch, in row-major order of first pixel.
/// This is the exhaustive full-frame counterpart to [`extract_masks`].
pub fn extract_all_components(patch: &SensorPatch) -> Vec<Mask> {
    let (w, h) = patch.dims();
    let mut labels = vec![0u32; w * h];
    let mut out = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if labels[y * w + x] == 0 {
                out.push(flood_component(
                    patch,
                    (x, y),
                    out.len() as u32 + 1,
                    &mut labels,
                ));
            }
        }
    }
    out
}

/// `|a ∩ b| / |a ∪ b|`; 0 when both masks are empty.
pub fn iou(a: &Mask, b: &Mask) -> Result<f64> {
    a.iou(b)
}

/// OR-merges pairs with IoU ≥ `tau_iou` until no such pair remains.
///
/// Pairs are scanned in ascending index order and the scan restarts after each
/// merge; the merged mask keeps the position of its earlier member.
pub fn merge_masks(masks: Vec<Mask>, tau_iou: f64) -> Result<Vec<Mask>> {
    let mut out = masks;
    if let Some(first) = out.first() {
        let dims = first.dims();
        if let Some(bad) = out.iter().find(|m| m.dims() != dims) {
            return Err(Error::DimensionMismatch {
                expected: dims,
                actual: bad.dims(),
            });
        }
    }
    let mut bboxes: Vec<_> = out.iter().map(Mask::bbox).collect();
    'restart: loop {
        for i in 0..out.len() {
            for j in i + 1..out.len() {
                if !bbox_overlap(bboxes[i], bboxes[j]) {
                    continue;
                }
                if out[i].iou(&out[j])? >= tau_iou {
                    let absorbed = out.remove(j);
                    bboxes.remove(j);
                    out[i].union_with(&absorbed)?;
                    bboxes[i] = out[i].bbox();
                    continue 'restart;
                }
            }
        }
        break;
    }
    Ok(out)
}

type BBox = Option<(usize, usize, usize, usize)>;

fn bbox_overlap(a: BBox, b: BBox) -> bool {
    match (a, b) {
        (Some((ax0, ay0, ax1, ay1)), Some((bx0, by0, bx1, by1))) => {
            ax0 <= bx1 && bx0 <= ax1 && ay0 <= by1 && by0 <= ay1
        }
        // Empty masks never reach a positive threshold.
        _ => false,
    }
}

/// Keeps masks with `area ≥ tau_area`, preserving order.
pub fn filter_by_area(masks: Vec<Mask>, tau_area: usize) -> Vec<Mask> {
    masks.into_iter().filter(|m| m.area() >= tau_area).collect()
}

/// Area threshold either as absolute pixels or as a fraction of the frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AreaThreshold {
    Pixels(usize),
    Fraction(f64),
}

impl AreaThreshold {
    pub fn resolve(self, dims: (usize, usize)) -> usize {
        match self {
            AreaThreshold::Pixels(p) => p,
            AreaThreshold::Fraction(f) => (f * (dims.0 * dims.1) as f64).ceil() as usize,
        }
    }
}

/// Where an annotated frame came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameSource {
    pub frame_id: u64,
    pub origin: (usize, usize),
    pub width: usize,
    pub height: usize,
}

impl FrameSource {
    pub fn of(patch: &SensorPatch) -> FrameSource {
        FrameSource {
            frame_id: patch.frame_id,
            origin: patch.origin,
            width: patch.width,
            height: patch.height,
        }
    }

    pub fn bare(width: usize, height: usize) -> FrameSource {
        FrameSource {
            frame_id: 0,
            origin: (0, 0),
            width,
            height,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AnnotatedMask {
    /// 1-based label drawn on the frame.
    pub index: usize,
    pub mask: Mask,
    pub centroid: (f64, f64),
}

/// Indexed masks with centroids, labelled `1..=n` in list order.
#[derive(Clone, Debug, PartialEq)]
pub struct AnnotatedFrame {
    pub source: FrameSource,
    pub masks: Vec<AnnotatedMask>,
}

impl AnnotatedFrame {
    pub fn len(&self) -> usize {
        self.masks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.source.width, self.source.height)
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.masks.iter().map(|m| m.index)
    }

    /// Mask for a 1-based index.
    pub fn get(&self, index: usize) -> Option<&AnnotatedMask> {
        index.checked_sub(1).and_then(|i| self.masks.get(i))
    }

    /// Pixelwise OR of the masks at `indices`; unknown indices are ignored.
    pub fn union_of(&self, indices: &[usize]) -> Mask {
        let (w, h) = self.dims();
        let mut out = Mask::new(w, h);
        for &i in indices {
            if let Some(m) = self.get(i) {
                out.union_with(&m.mask).expect("frame masks share dims");
            }
        }
        out
    }
}

/// Centroid `(Σx/ΣM, Σy/ΣM)` over set pixels.
pub fn centroid(mask: &Mask) -> Option<(f64, f64)> {
    if mask.is_empty() {
        return None;
    }
    let (sx, sy) = mask.pixels().fold((0u64, 0u64), |(sx, sy), (x, y)| {
        (sx + x as u64, sy + y as u64)
    });
    let n = mask.area() as f64;
    Some((sx as f64 / n, sy as f64 / n))
}

pub fn annotate(masks: Vec<Mask>, source: FrameSource) -> Result<AnnotatedFrame> {
    let dims = (source.width, source.height);
    let masks = masks
        .into_iter()
        .enumerate()
        .map(|(i, mask)| {
            if mask.dims() != dims {
                return Err(Error::DimensionMismatch {
                    expected: dims,
                    actual: mask.dims(),
                });
            }
            let centroid = centroid(&mask).ok_or(Error::EmptyMask(i + 1))?;
            Ok(AnnotatedMask {
                index: i + 1,
                mask,
                centroid,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AnnotatedFrame { source, masks })
}

/// Segmentation parameters shared by inference and labeling.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegmentationParams {
    pub grid_side: usize,
    pub margins: Margins,
    pub tau_iou: f64,
    pub tau_area: AreaThreshold,
    pub tau_track: f64,
}

impl Default for SegmentationParams {
    fn default() -> Self {
        SegmentationParams {
            grid_side: 8,
            margins: Margins { min: 1, max: 1 },
            tau_iou: 0.5,
            tau_area: AreaThreshold::Fraction(0.01),
            tau_track: 0.3,
        }
    }
}

/// Prompt grid → extraction → merge → area filter → annotation.
pub fn segment_patch(patch: &SensorPatch, params: &SegmentationParams) -> Result<AnnotatedFrame> {
    let grid = generate_prompt_grid(
        patch.dims(),
        params.grid_side,
        fit_margins(params.margins, patch.dims()),
    )?;
    let masks = extract_masks(patch, &grid)?;
    finish(patch, masks, params)
}

/// Same pipeline over every component of the frame instead of prompt points.
pub fn segment_patch_exhaustive(
    patch: &SensorPatch,
    params: &SegmentationParams,
) -> Result<AnnotatedFrame> {
    finish(patch, extract_all_components(patch), params)
}

fn finish(
    patch: &SensorPatch,
    masks: Vec<Mask>,
    params: &SegmentationParams,
) -> Result<AnnotatedFrame> {
    let merged = merge_masks(masks, params.tau_iou)?;
    let kept = filter_by_area(merged, params.tau_area.resolve(patch.dims()));
    annotate(kept, FrameSource::of(patch))
}

// Clipped border patches can be narrower than the configured margins.
fn fit_margins(m: Margins, dims: (usize, usize)) -> Margins {
    let small = dims.0.min(dims.1);
    if m.min + m.max < small {
        m
    } else {
        Margins { min: 0, max: 0 }
    }
}

/// Tracked drivable selection carried between oracle queries.
#[derive(Clone, Debug, PartialEq)]
pub struct TrackState {
    pub frame: AnnotatedFrame,
    pub drivable_indices: Vec<usize>,
    /// In `[0, TRACK_RESET_FRAMES)`.
    pub frames_since_reset: u32,
    /// Drivable selection must be re-queried.
    pub lost: bool,
}

impl TrackState {
    /// Fresh track after an oracle selection.
    pub fn new(frame: AnnotatedFrame, drivable_indices: Vec<usize>) -> TrackState {
        TrackState {
            frame,
            drivable_indices,
            frames_since_reset: 0,
            lost: false,
        }
    }

    pub fn drivable_mask(&self) -> Mask {
        self.frame.union_of(&self.drivable_indices)
    }
}

/// Re-segments `patch` and carries each drivable mask over to the new mask of
/// highest IoU. Any drivable mask without a match at `tau_track` marks the
/// track lost, as does every `TRACK_RESET_FRAMES`-th frame.
pub fn track_masks(
    prev: &TrackState,
    patch: &SensorPatch,
    params: &SegmentationParams,
) -> Result<TrackState> {
    let frame = segment_patch(patch, params)?;
    let offset = (
        frame.source.origin.0 as i64 - prev.frame.source.origin.0 as i64,
        frame.source.origin.1 as i64 - prev.frame.source.origin.1 as i64,
    );
    let mut indices = Vec::new();
    let mut lost = false;
    for &idx in &prev.drivable_indices {
        let Some(old) = prev.frame.get(idx) else {
            lost = true;
            continue;
        };
        let moved = old
            .mask
            .translated(offset, frame.source.width, frame.source.height);
        let mut best: Option<(usize, f64)> = None;
        for m in &frame.masks {
            let score = moved.iou(&m.mask)?;
            if best.is_none_or(|(_, s)| score > s) {
                best = Some((m.index, score));
            }
        }
        match best {
            Some((i, score)) if score >= params.tau_track => {
                if !indices.contains(&i) {
                    indices.push(i);
                }
            }
            _ => lost = true,
        }
    }
    let mut frames_since_reset = prev.frames_since_reset + 1;
    if frames_since_reset >= TRACK_RESET_FRAMES {
        frames_since_reset = 0;
        lost = true;
    }
    Ok(TrackState {
        frame,
        drivable_indices: indices,
        frames_since_reset,
        lost,
    })
}
