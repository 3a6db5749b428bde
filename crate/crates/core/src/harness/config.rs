//! Scenario configuration, loaded from TOML.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::control::ControllerGains;
use crate::drivability::{
    AllIndicesOracle, ExternalOracle, FalsePositiveScope, GroundTruthOracle, NoiseParams,
    NoisyOracle, Oracle, PromptSpec,
};
use crate::error::{Error, Result};
use crate::planning::{HybridParams, UnknownPolicy};
use crate::segmentation::SegmentationParams;
use crate::world::{generate_world, TerrainWorld, VehicleParams, WorldSpec};

/// Where the terrain comes from: a saved world file, or a seed plus spec.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldSource {
    pub file: Option<PathBuf>,
    pub seed: u64,
    pub spec: WorldSpec,
}

impl WorldSource {
    pub fn load(&self) -> Result<TerrainWorld> {
        match &self.file {
            Some(path) => TerrainWorld::load(path),
            None => generate_world(self.seed, &self.spec),
        }
    }
}

/// One start/goal pair. Cells default to the world's anchors.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Route {
    pub name: String,
    pub start: Option<[usize; 2]>,
    pub goal: Option<[usize; 2]>,
    /// Initial heading in radians; defaults to facing along the shortest
    /// drivable route out of the start cell.
    pub heading: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OracleConfig {
    #[default]
    Gt,
    Noisy {
        #[serde(default)]
        p_fp: f64,
        #[serde(default)]
        p_fn: f64,
        #[serde(default)]
        fp_scope: FalsePositiveScope,
    },
    All,
    /// External adapter: a child process (`command`) or an HTTP endpoint (`url`).
    Extern {
        #[serde(default)]
        command: Vec<String>,
        url: Option<String>,
    },
}

impl OracleConfig {
    pub fn validate(&self) -> Result<()> {
        match self {
            OracleConfig::Noisy {
                p_fp,
                p_fn,
                fp_scope,
            } => NoiseParams {
                p_fp: *p_fp,
                p_fn: *p_fn,
                seed: 0,
                fp_scope: *fp_scope,
            }
            .validate(),
            OracleConfig::Extern { command, url } if command.is_empty() && url.is_none() => Err(
                Error::Config("extern oracle needs `command` or `url`".into()),
            ),
            _ => Ok(()),
        }
    }

    /// Instantiates the oracle; `seed` drives any noise.
    pub fn build(&self, seed: u64) -> Result<Box<dyn Oracle>> {
        Ok(match self {
            OracleConfig::Gt => Box::new(GroundTruthOracle),
            OracleConfig::Noisy {
                p_fp,
                p_fn,
                fp_scope,
            } => Box::new(NoisyOracle(NoiseParams {
                p_fp: *p_fp,
                p_fn: *p_fn,
                seed,
                fp_scope: *fp_scope,
            })),
            OracleConfig::All => Box::new(AllIndicesOracle),
            OracleConfig::Extern { command, url } => match (command.split_first(), url) {
                (Some((program, args)), _) => Box::new(ExternalOracle::spawn(program, args)?),
                (None, Some(url)) => Box::new(ExternalOracle::http(url)?),
                (None, None) => {
                    return Err(Error::Config(
                        "extern oracle needs `command` or `url`".into(),
                    ))
                }
            },
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerConfig {
    /// How D* Lite reads unobserved cells.
    pub global_unknown: UnknownPolicy,
    /// Distance (world units) by which D* Lite grows obstacles; wider than the
    /// local planner's inflation so the global path leaves room to turn.
    pub global_clearance: f64,
    /// Radius (cells) around the vehicle for picking the local goal.
    pub local_goal_radius_cells: f64,
    pub hybrid: HybridParams,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            global_unknown: UnknownPolicy::Free,
            global_clearance: 2.0,
            local_goal_radius_cells: 14.0,
            hybrid: HybridParams {
                inflation_radius: 1.0,
                window_radius_cells: 24.0,
                ..HybridParams::default()
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Base seed for oracle noise; repetition `r` uses `seed + r`.
    pub seed: u64,
    pub world: WorldSource,
    pub routes: Vec<Route>,
    pub oracle: OracleConfig,
    /// Contingency oracle queried once when the primary selects nothing.
    pub fallback: Option<OracleConfig>,
    pub prompt: PromptSpec,
    pub segmentation: SegmentationParams,
    pub coverage_threshold: f64,
    pub planner: PlannerConfig,
    pub vehicle: VehicleParams,
    pub gains: ControllerGains,
    pub repetitions: usize,
    pub step_budget: usize,
    pub dt: f64,
    /// Control steps between perception frames.
    pub perception_period: usize,
    /// Sensor window side, in cells.
    pub sensor_window: usize,
    /// Occupancy-grid cell size in meters; defaults to the world cell size.
    pub grid_s: Option<f64>,
    pub cruise_speed: f64,
    pub goal_tolerance_cells: f64,
    pub stuck_steps: usize,
    pub stuck_distance: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            seed: 0,
            world: WorldSource::default(),
            routes: vec![Route {
                name: "default".into(),
                ..Route::default()
            }],
            oracle: OracleConfig::Gt,
            fallback: None,
            prompt: PromptSpec::default(),
            segmentation: SegmentationParams::default(),
            coverage_threshold: 0.5,
            planner: PlannerConfig::default(),
            vehicle: VehicleParams::default(),
            gains: ControllerGains::default(),
            repetitions: 1,
            step_budget: 4000,
            dt: 0.05,
            perception_period: 4,
            sensor_window: 40,
            grid_s: None,
            cruise_speed: 3.0,
            goal_tolerance_cells: 2.0,
            stuck_steps: 200,
            stuck_distance: 0.1,
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<ScenarioConfig> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; relative world paths resolve against its directory.
    pub fn load(path: &Path) -> Result<ScenarioConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg: ScenarioConfig =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if let Some(file) = &cfg.world.file {
            if file.is_relative() {
                let base = path.parent().unwrap_or(Path::new("."));
                cfg.world.file = Some(base.join(file));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.repetitions < 1 {
            return bad("repetitions must be at least 1".into());
        }
        if self.step_budget < 1 {
            return bad("step_budget must be at least 1".into());
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if self.perception_period < 1 || self.sensor_window < 3 {
            return bad("perception_period ≥ 1 and sensor_window ≥ 3 required".into());
        }
        if self.routes.is_empty() {
            return bad("at least one route is required".into());
        }
        if !(0.0..=1.0).contains(&self.coverage_threshold) {
            return bad("coverage_threshold must lie in [0, 1]".into());
        }
        if let Some(s) = self.grid_s {
            if !(s > 0.0 && s.is_finite()) {
                return bad("grid_s must be positive".into());
            }
        }
        if let Some(file) = &self.world.file {
            if !file.exists() {
                return bad(format!("world file {} does not exist", file.display()));
            }
        }
        let hp = &self.planner.hybrid;
        if !(hp.inflation_radius >= 0.0 && self.planner.global_clearance >= hp.inflation_radius) {
            return bad(
                "planner.global_clearance must be at least planner.hybrid.inflation_radius ≥ 0"
                    .into(),
            );
        }
        self.oracle.validate()?;
        if let Some(f) = &self.fallback {
            f.validate()?;
        }
        self.prompt.validate()?;
        self.vehicle.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_minimal_and_full() {
        let cfg = ScenarioConfig::from_toml("seed = 3\n").unwrap();
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.dt, 0.05);
        let cfg = ScenarioConfig::from_toml(
            r#"
            repetitions = 5
            [world]
            seed = 11
            [world.spec]
            corridor_width = 10
            [[routes]]
            name = "S1-A"
            goal = [80, 20]
            [oracle]
            kind = "noisy"
            p_fp = 0.3
            fp_scope = "hazard"
            [fallback]
            kind = "gt"
            "#,
        )
        .unwrap();
        assert_eq!(cfg.world.spec.corridor_width, 10);
        assert_eq!(cfg.routes[0].goal, Some([80, 20]));
        assert!(matches!(
            cfg.oracle,
            OracleConfig::Noisy {
                fp_scope: FalsePositiveScope::Hazard,
                ..
            }
        ));
        assert_eq!(cfg.fallback, Some(OracleConfig::Gt));
    }

    #[test]
    fn rejects_bad_values() {
        assert!(ScenarioConfig::from_toml("repetitions = 0").is_err());
        assert!(ScenarioConfig::from_toml("step_budget = 0").is_err());
        assert!(ScenarioConfig::from_toml("[world]\nfile = \"/nonexistent/world.ofrw\"").is_err());
        assert!(ScenarioConfig::from_toml("[oracle]\nkind = \"noisy\"\np_fn = 1.5").is_err());
        assert!(ScenarioConfig::from_toml("[oracle]\nkind = \"extern\"").is_err());
        assert!(ScenarioConfig::from_toml("bogus = 1").is_err());
    }
}
