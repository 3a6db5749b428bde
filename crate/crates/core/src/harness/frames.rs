//! Frame sets on disk, ground-truth labels and the labeling store.
//!
//! Directory layout:
//! - `frame_<id>.json` — [`StoredFrame`]: the sensor patch, drivable classes
//!   and the annotated masks as run-length encodings.
//! - `frame_<id>.label.json` — [`Label`]: toggle states and the composed
//!   ground-truth mask.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::{Mask, Rle};
use crate::segmentation::{AnnotatedFrame, AnnotatedMask, FrameSource, SegmentationParams};
use crate::world::{capture_patch_with_id, ClassSet, SensorPatch, TerrainWorld, VehiclePose};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskRecord {
    pub index: usize,
    pub centroid: [f64; 2],
    pub rle: Rle,
}

/// A captured, segmented frame as exchanged with evaluation and labeling.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoredFrame {
    pub frame_id: u64,
    pub patch: SensorPatch,
    pub drivable_classes: ClassSet,
    pub masks: Vec<MaskRecord>,
}

impl StoredFrame {
    pub fn new(
        patch: SensorPatch,
        frame: &AnnotatedFrame,
        drivable_classes: ClassSet,
    ) -> StoredFrame {
        StoredFrame {
            frame_id: patch.frame_id,
            masks: frame
                .masks
                .iter()
                .map(|m| MaskRecord {
                    index: m.index,
                    centroid: [m.centroid.0, m.centroid.1],
                    rle: m.mask.to_rle(),
                })
                .collect(),
            patch,
            drivable_classes,
        }
    }

    pub fn annotated(&self) -> Result<AnnotatedFrame> {
        let masks = self
            .masks
            .iter()
            .map(|r| {
                let mask = Mask::from_rle(&r.rle)?;
                if mask.dims() != self.patch.dims() {
                    return Err(Error::DimensionMismatch {
                        expected: self.patch.dims(),
                        actual: mask.dims(),
                    });
                }
                Ok(AnnotatedMask {
                    index: r.index,
                    mask,
                    centroid: (r.centroid[0], r.centroid[1]),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        for (i, m) in masks.iter().enumerate() {
            if m.index != i + 1 {
                return Err(Error::Format {
                    path: format!("frame {}", self.frame_id),
                    reason: format!(
                        "mask indices must run 1..=n, found {} at position {}",
                        m.index,
                        i + 1
                    ),
                });
            }
        }
        Ok(AnnotatedFrame {
            source: FrameSource::of(&self.patch),
            masks,
        })
    }
}

/// Per-mask labeling state.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToggleState {
    Add,
    Subtract,
    Reset,
}

/// `(OR of added masks) AND NOT (OR of subtracted masks)`.
pub fn compose_gt(frame: &AnnotatedFrame, states: &BTreeMap<usize, ToggleState>) -> Mask {
    let pick = |want: ToggleState| {
        states
            .iter()
            .filter(|(_, s)| **s == want)
            .map(|(i, _)| *i)
            .collect::<Vec<_>>()
    };
    let mut gt = frame.union_of(&pick(ToggleState::Add));
    gt.subtract(&frame.union_of(&pick(ToggleState::Subtract)))
        .expect("frame masks share dims");
    gt
}

/// Folds incoming toggles into stored ones; `reset` removes the entry.
pub fn apply_toggles(
    states: &mut BTreeMap<usize, ToggleState>,
    incoming: &BTreeMap<usize, ToggleState>,
) {
    for (&i, &s) in incoming {
        match s {
            ToggleState::Reset => {
                states.remove(&i);
            }
            other => {
                states.insert(i, other);
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Label {
    pub frame_id: u64,
    pub version: u64,
    pub states: BTreeMap<usize, ToggleState>,
    pub gt_rle: Rle,
}

pub fn frame_path(dir: &Path, id: u64) -> PathBuf {
    dir.join(format!("frame_{id:06}.json"))
}

pub fn label_path(dir: &Path, id: u64) -> PathBuf {
    dir.join(format!("frame_{id:06}.label.json"))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Format {
        path: path.display().to_string(),
        reason: e.to_string(),
    })
}

/// Writes `frame` into `dir`.
pub fn write_frame(dir: &Path, frame: &StoredFrame) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(
        frame_path(dir, frame.frame_id),
        serde_json::to_string(frame)?,
    )?;
    Ok(())
}

/// Frame ids present in `dir`, in numerical order.
pub fn list_frames(dir: &Path) -> Result<Vec<u64>> {
    let mut ids = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let name = entry?.file_name();
        let name = name.to_string_lossy();
        if let Some(id) = name
            .strip_prefix("frame_")
            .and_then(|r| r.strip_suffix(".json"))
        {
            if let Ok(id) = id.parse::<u64>() {
                ids.push(id);
            }
        }
    }
    ids.sort_unstable();
    Ok(ids)
}

pub fn read_frame(dir: &Path, id: u64) -> Result<StoredFrame> {
    let path = frame_path(dir, id);
    if !path.exists() {
        return Err(Error::UnknownFrame(id));
    }
    let frame: StoredFrame = read_json(&path)?;
    frame.annotated()?;
    Ok(frame)
}

pub fn read_label(dir: &Path, id: u64) -> Result<Option<Label>> {
    let path = label_path(dir, id);
    if !path.exists() {
        return Ok(None);
    }
    read_json(&path).map(Some)
}

/// Captures `count` frames at seeded drivable poses and segments them.
pub fn sample_frames(
    world: &TerrainWorld,
    count: usize,
    seed: u64,
    window: usize,
    params: &SegmentationParams,
) -> Result<Vec<StoredFrame>> {
    let drivable: Vec<(usize, usize)> = (0..world.height)
        .flat_map(|y| (0..world.width).map(move |x| (x, y)))
        .filter(|&(x, y)| world.is_drivable_cell(x, y))
        .collect();
    if drivable.is_empty() {
        return Err(Error::InvalidWorldSpec(
            "world has no drivable cells to sample".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    for id in 0..count as u64 {
        let (cx, cy) = drivable[rng.random_range(0..drivable.len())];
        let theta = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
        let (x, y) = world.cell_center(cx, cy);
        let patch = capture_patch_with_id(world, &VehiclePose::new(x, y, theta, 0.0), window, id)?;
        let frame = crate::segmentation::segment_patch(&patch, params)?;
        out.push(StoredFrame::new(patch, &frame, world.drivable_classes));
    }
    Ok(out)
}

/// Authoritative label storage behind the labeling API. Reads are concurrent;
/// writes are serialized per frame and bump a version counter.
pub struct LabelStore {
    dir: PathBuf,
    ids: Vec<u64>,
    locks: Mutex<HashMap<u64, Arc<Mutex<()>>>>,
}

impl LabelStore {
    /// Opens `dir`, validating every frame file up front.
    pub fn open(dir: &Path) -> Result<LabelStore> {
        if !dir.is_dir() {
            return Err(Error::Config(format!(
                "frames directory {} does not exist",
                dir.display()
            )));
        }
        let ids = list_frames(dir)?;
        for &id in &ids {
            read_frame(dir, id)?;
            read_label(dir, id)?;
        }
        Ok(LabelStore {
            dir: dir.to_path_buf(),
            ids,
            locks: Mutex::new(HashMap::new()),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn frame_ids(&self) -> &[u64] {
        &self.ids
    }

    pub fn frame(&self, id: u64) -> Result<StoredFrame> {
        if !self.ids.contains(&id) {
            return Err(Error::UnknownFrame(id));
        }
        read_frame(&self.dir, id)
    }

    /// Stored label, or an empty version-0 label for an unlabeled frame.
    pub fn label(&self, id: u64) -> Result<Label> {
        let frame = self.frame(id)?;
        Ok(read_label(&self.dir, id)?.unwrap_or_else(|| Label {
            frame_id: id,
            version: 0,
            states: BTreeMap::new(),
            gt_rle: Mask::new(frame.patch.width, frame.patch.height).to_rle(),
        }))
    }

    /// Applies toggles and persists the recomposed ground truth. When
    /// `expected_version` is given it must match the stored version.
    pub fn apply(
        &self,
        id: u64,
        toggles: &BTreeMap<usize, ToggleState>,
        expected_version: Option<u64>,
    ) -> Result<Label> {
        let lock = {
            let mut locks = self.locks.lock().expect("lock table poisoned");
            locks.entry(id).or_default().clone()
        };
        let _guard = lock.lock().expect("frame lock poisoned");
        let frame = self.frame(id)?.annotated()?;
        if let Some(&bad) = toggles.keys().find(|&&i| frame.get(i).is_none()) {
            return Err(Error::Config(format!("frame {id} has no mask {bad}")));
        }
        let mut label = self.label(id)?;
        if let Some(v) = expected_version {
            if v != label.version {
                return Err(Error::VersionConflict {
                    client: v,
                    server: label.version,
                });
            }
        }
        apply_toggles(&mut label.states, toggles);
        label.gt_rle = compose_gt(&frame, &label.states).to_rle();
        label.version += 1;
        let tmp = label_path(&self.dir, id).with_extension("tmp");
        std::fs::write(&tmp, serde_json::to_string(&label)?)?;
        std::fs::rename(&tmp, label_path(&self.dir, id))?;
        Ok(label)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::segmentation::annotate;
    use crate::world::TerrainClass;

    fn stripes() -> StoredFrame {
        let patch = SensorPatch::from_classes(5, 8, 2, vec![TerrainClass::Dirt; 16]);
        let masks = (0..8)
            .map(|i| Mask::from_fn(8, 2, |x, y| x == i || (i == 6 && x == 3 && y == 0)))
            .collect();
        let frame = annotate(masks, FrameSource::of(&patch)).unwrap();
        StoredFrame::new(patch, &frame, ClassSet::default_drivable())
    }

    #[test]
    fn add_then_subtract_sequence() {
        let sf = stripes();
        let frame = sf.annotated().unwrap();
        let mut states = BTreeMap::new();
        apply_toggles(
            &mut states,
            &BTreeMap::from([
                (4, ToggleState::Add),
                (5, ToggleState::Add),
                (6, ToggleState::Add),
            ]),
        );
        apply_toggles(
            &mut states,
            &BTreeMap::from([(6, ToggleState::Subtract), (7, ToggleState::Subtract)]),
        );
        let gt = compose_gt(&frame, &states);
        let m = |i: usize| frame.get(i).unwrap().mask.clone();
        let expected = Mask::from_fn(8, 2, |x, y| {
            (m(4).get(x, y) || m(5).get(x, y)) && !(m(6).get(x, y) || m(7).get(x, y))
        });
        assert_eq!(gt, expected);
        apply_toggles(&mut states, &BTreeMap::from([(6, ToggleState::Reset)]));
        let expected = Mask::from_fn(8, 2, |x, y| {
            (m(4).get(x, y) || m(5).get(x, y)) && !m(7).get(x, y)
        });
        assert_eq!(compose_gt(&frame, &states), expected);
    }

    #[test]
    fn store_roundtrip_and_versions() {
        let dir = tempfile::tempdir().unwrap();
        let sf = stripes();
        write_frame(dir.path(), &sf).unwrap();
        let store = LabelStore::open(dir.path()).unwrap();
        assert_eq!(store.frame_ids(), &[5]);
        assert_eq!(store.label(5).unwrap().version, 0);
        let l1 = store
            .apply(5, &BTreeMap::from([(1, ToggleState::Add)]), Some(0))
            .unwrap();
        assert_eq!(l1.version, 1);
        assert!(matches!(
            store.apply(5, &BTreeMap::from([(2, ToggleState::Add)]), Some(0)),
            Err(Error::VersionConflict {
                client: 0,
                server: 1
            })
        ));
        let reopened = LabelStore::open(dir.path()).unwrap();
        assert_eq!(reopened.label(5).unwrap(), l1);
        assert!(matches!(store.frame(9), Err(Error::UnknownFrame(9))));
        assert!(store
            .apply(5, &BTreeMap::from([(99, ToggleState::Add)]), None)
            .is_err());
    }

    #[test]
    fn malformed_frame_fails_open() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(frame_path(dir.path(), 1), "{not json").unwrap();
        assert!(matches!(
            LabelStore::open(dir.path()),
            Err(Error::Format { .. })
        ));
    }
}
