//! Scenario configuration, the closed-loop runner, benchmark suites, frame
//! storage and the labeling store.

mod config;
mod draw;
mod frames;
mod run;
mod suites;

pub use config::{OracleConfig, PlannerConfig, Route, ScenarioConfig, WorldSource};
pub use draw::{render_frame, render_run};
pub use frames::{
    apply_toggles, compose_gt, frame_path, label_path, list_frames, read_frame, read_label,
    sample_frames, write_frame, Label, LabelStore, MaskRecord, StoredFrame, ToggleState,
};
pub use run::{
    hazard_mask, resolve_route, run_scenario, Event, Outcome, RunLog, RunSummary, StepRecord,
};
pub use suites::{
    eval_suite, mosaic_patch, reachability_suite, timing_analog_frames, timing_compare, EvalReport,
    EvalRow, ReachabilityReport, RouteReport, TimingRow, TimingTable, TruthSource,
};
