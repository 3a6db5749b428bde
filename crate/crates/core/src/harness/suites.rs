//! Benchmarks: reachability, evaluation and segmentation timing.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ScenarioConfig;
use super::frames::{Label, StoredFrame};
use super::run::{run_scenario, Outcome, RunLog};
use crate::drivability::{
    class_truth_mask, ground_truth_indices, iou_eval, query_with_contingency, render_query,
    score_selection, select_masks, Cardinality, Oracle, OracleContext, PromptSpec,
};
use crate::error::{Error, Result};
use crate::mask::Mask;
use crate::segmentation::{
    extract_all_components, segment_patch, segment_patch_exhaustive, AnnotatedFrame,
    SegmentationParams,
};
use crate::world::{SensorPatch, TerrainClass, TerrainWorld};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RouteReport {
    pub route: String,
    pub runs: usize,
    pub successes: usize,
    pub success_rate: f64,
    /// Mean steps over successful runs only.
    pub avg_steps: Option<f64>,
    /// Mean simulated seconds over successful runs only.
    pub avg_sim_time: Option<f64>,
    pub outcomes: Vec<Outcome>,
    pub seeds: Vec<u64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ReachabilityReport {
    pub routes: Vec<RouteReport>,
}

impl ReachabilityReport {
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("route,runs,successes,success_rate,avg_steps,avg_sim_time_s,outcomes\n");
        for r in &self.routes {
            let outcomes: Vec<&str> = r.outcomes.iter().map(|o| o.as_str()).collect();
            let _ = writeln!(
                out,
                "{},{},{},{:.3},{},{},{}",
                r.route,
                r.runs,
                r.successes,
                r.success_rate,
                r.avg_steps.map_or(String::new(), |v| format!("{v:.1}")),
                r.avg_sim_time.map_or(String::new(), |v| format!("{v:.2}")),
                outcomes.join(" ")
            );
        }
        out
    }
}

/// Runs every route `repetitions` times (repetition `r` seeds the oracle with
/// `cfg.seed + r`), in parallel, and aggregates per route.
pub fn reachability_suite(
    cfg: &ScenarioConfig,
    world: &TerrainWorld,
) -> Result<(ReachabilityReport, Vec<RunLog>)> {
    cfg.validate()?;
    let jobs: Vec<(usize, u64)> = (0..cfg.routes.len())
        .flat_map(|r| (0..cfg.repetitions as u64).map(move |k| (r, cfg.seed.wrapping_add(k))))
        .collect();
    let logs = jobs
        .par_iter()
        .map(|&(r, seed)| run_scenario(cfg, world, &cfg.routes[r], seed))
        .collect::<Result<Vec<_>>>()?;
    let mut report = ReachabilityReport::default();
    for (ri, route) in cfg.routes.iter().enumerate() {
        let runs: Vec<&RunLog> = jobs
            .iter()
            .zip(&logs)
            .filter(|((r, _), _)| *r == ri)
            .map(|(_, l)| l)
            .collect();
        let ok: Vec<&&RunLog> = runs
            .iter()
            .filter(|l| l.summary.outcome == Outcome::Success)
            .collect();
        let mean = |f: &dyn Fn(&RunLog) -> f64| {
            (!ok.is_empty()).then(|| ok.iter().map(|l| f(l)).sum::<f64>() / ok.len() as f64)
        };
        report.routes.push(RouteReport {
            route: route.name.clone(),
            runs: runs.len(),
            successes: ok.len(),
            success_rate: ok.len() as f64 / runs.len() as f64,
            avg_steps: mean(&|l| l.summary.elapsed_steps as f64),
            avg_sim_time: mean(&|l| l.summary.sim_time),
            outcomes: runs.iter().map(|l| l.summary.outcome).collect(),
            seeds: runs.iter().map(|l| l.summary.seed).collect(),
        });
    }
    Ok((report, logs))
}

/// Where evaluation ground truth comes from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TruthSource {
    /// Drivable-class cells covered by the frame's masks.
    #[default]
    Classes,
    /// Saved labeling-interface ground truth.
    Labels,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub frame_id: u64,
    pub selected: Vec<usize>,
    pub truth_indices: Vec<usize>,
    /// `None` when the truth mask is empty (excluded from the mean).
    pub iou: Option<f64>,
    pub rubric: f64,
    pub oracle_calls: usize,
    pub selection_failed: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
    pub miou: Option<f64>,
    pub mean_rubric: Option<f64>,
    /// Frames skipped because their label was requested but absent.
    pub missing_labels: Vec<u64>,
}

impl EvalReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "frame_id,iou,rubric,selected,truth_indices,oracle_calls,selection_failed\n",
        );
        let join = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(" ");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.frame_id,
                r.iou.map_or(String::new(), |v| format!("{v:.6}")),
                r.rubric,
                join(&r.selected),
                join(&r.truth_indices),
                r.oracle_calls,
                r.selection_failed
            );
        }
        for id in &self.missing_labels {
            let _ = writeln!(out, "{id},,,,,,missing_label");
        }
        let _ = writeln!(
            out,
            "mean,{},{},,,,",
            self.miou.map_or(String::new(), |v| format!("{v:.6}")),
            self.mean_rubric
                .map_or(String::new(), |v| format!("{v:.6}"))
        );
        out
    }
}

/// Masks with more than half their pixels inside `truth`.
fn indices_inside(frame: &AnnotatedFrame, truth: &Mask) -> Vec<usize> {
    frame
        .masks
        .iter()
        .filter(|m| 2 * m.mask.intersection_area(truth).unwrap_or(0) > m.mask.area())
        .map(|m| m.index)
        .collect()
}

/// Oracle queries per frame against class-derived or labeled truth. IoU is
/// always computed on the MNP-style union of the selection.
pub fn eval_suite(
    frames: &[StoredFrame],
    labels: &HashMap<u64, Label>,
    truth: TruthSource,
    oracle: &mut dyn Oracle,
    mut fallback: Option<&mut (dyn Oracle + 'static)>,
    prompt: &PromptSpec,
    coverage_threshold: f64,
) -> Result<EvalReport> {
    let mut report = EvalReport::default();
    let mut ious = Vec::new();
    let mut rubrics = Vec::new();
    for sf in frames {
        let frame = sf.annotated()?;
        let (truth_mask, truth_indices) = match truth {
            TruthSource::Classes => (
                class_truth_mask(&frame, &sf.patch, sf.drivable_classes),
                ground_truth_indices(&frame, &sf.patch, sf.drivable_classes, Cardinality::Mnp),
            ),
            TruthSource::Labels => match labels.get(&sf.frame_id) {
                Some(l) => {
                    let m = Mask::from_rle(&l.gt_rle)?;
                    if m.dims() != frame.dims() {
                        return Err(Error::DimensionMismatch {
                            expected: frame.dims(),
                            actual: m.dims(),
                        });
                    }
                    let idx = indices_inside(&frame, &m);
                    (m, idx)
                }
                None => {
                    report.missing_labels.push(sf.frame_id);
                    continue;
                }
            },
        };
        let query = render_query(&frame, &sf.patch, prompt)?;
        let ctx = OracleContext {
            query: &query,
            patch: &sf.patch,
            drivable: sf.drivable_classes,
            hazard: None,
        };
        let (result, calls) = query_with_contingency(oracle, fallback.as_deref_mut(), &ctx);
        let (selected, failed) = match result {
            Ok(out) => (out.response.indices, false),
            Err(Error::NoDrivableSelection) => (Vec::new(), true),
            Err(e) => return Err(e),
        };
        let predicted = select_masks(&frame, &selected);
        let iou = if truth_mask.is_empty() {
            None
        } else {
            Some(iou_eval(&predicted.bitmap, &truth_mask)?)
        };
        let rubric = score_selection(&frame, &selected, &truth_indices, coverage_threshold).value();
        ious.extend(iou);
        rubrics.push(rubric);
        report.rows.push(EvalRow {
            frame_id: sf.frame_id,
            selected,
            truth_indices,
            iou,
            rubric,
            oracle_calls: calls,
            selection_failed: failed,
        });
    }
    let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
    report.miou = mean(&ious);
    report.mean_rubric = mean(&rubrics);
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub frame_id: u64,
    /// Connected components in the frame.
    pub components: usize,
    pub point_masks: usize,
    pub full_masks: usize,
    /// Median wall-clock microseconds.
    pub point_us: f64,
    pub full_us: f64,
    /// `point_us / full_us`.
    pub ratio: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TimingTable {
    pub rows: Vec<TimingRow>,
}

impl TimingTable {
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("frame_id,components,point_masks,full_masks,point_us,full_us,ratio\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{:.1},{:.1},{:.4}",
                r.frame_id,
                r.components,
                r.point_masks,
                r.full_masks,
                r.point_us,
                r.full_us,
                r.ratio
            );
        }
        out
    }
}

fn median_us(reps: usize, mut f: impl FnMut() -> Result<usize>) -> Result<(f64, usize)> {
    let mut times = Vec::with_capacity(reps);
    let mut n = 0;
    for _ in 0..reps.max(1) {
        let t = Instant::now();
        n = f()?;
        times.push(t.elapsed().as_secs_f64() * 1e6);
    }
    times.sort_by(f64::total_cmp);
    Ok((times[times.len() / 2], n))
}

/// Point-prompted vs exhaustive segmentation under identical thresholds.
pub fn timing_compare(
    patches: &[SensorPatch],
    params: &SegmentationParams,
    reps: usize,
) -> Result<TimingTable> {
    let mut table = TimingTable::default();
    for p in patches {
        let (point_us, point_masks) = median_us(reps, || Ok(segment_patch(p, params)?.len()))?;
        let (full_us, full_masks) =
            median_us(reps, || Ok(segment_patch_exhaustive(p, params)?.len()))?;
        table.rows.push(TimingRow {
            frame_id: p.frame_id,
            components: extract_all_components(p).len(),
            point_masks,
            full_masks,
            point_us,
            full_us,
            ratio: point_us / full_us,
        });
    }
    Ok(table)
}

/// Square patch tiled by `blocks × blocks` cells of seeded random classes.
pub fn mosaic_patch(frame_id: u64, side: usize, blocks: usize, seed: u64) -> SensorPatch {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tile: Vec<TerrainClass> = (0..blocks * blocks)
        .map(|_| TerrainClass::ALL[rng.random_range(0..TerrainClass::ALL.len())])
        .collect();
    let classes = (0..side * side)
        .map(|i| {
            let (x, y) = (i % side, i / side);
            tile[(y * blocks / side) * blocks + x * blocks / side]
        })
        .collect();
    SensorPatch::from_classes(frame_id, side, side, classes)
}

/// Four cluttered frames with roughly 90, 500, 1500 and 2000 connected
/// components, from sparse to dense.
pub fn timing_analog_frames(seed: u64) -> Vec<SensorPatch> {
    [10, 24, 42, 48]
        .iter()
        .enumerate()
        .map(|(i, &b)| mosaic_patch(i as u64, 120, b, seed.wrapping_add(i as u64)))
        .collect()
}
