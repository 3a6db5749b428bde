use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;

use offroad_cli::server;
use offroad_core::drivability::{FalsePositiveScope, PromptSpec};
use offroad_core::harness::{
    eval_suite, list_frames, reachability_suite, read_frame, read_label, render_frame, render_run,
    run_scenario, sample_frames, timing_analog_frames, timing_compare, write_frame, OracleConfig,
    RunLog, ScenarioConfig, StoredFrame, TruthSource,
};
use offroad_core::render::parse_layers;
use offroad_core::segmentation::SegmentationParams;
use offroad_core::world::{generate_world, TerrainWorld, WorldSpec};

#[derive(Parser, Debug)]
#[command(
    name = "offroad",
    version,
    about = "Deterministic off-road navigation harness"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one closed-loop scenario per route and write the logs.
    Run(RunArgs),
    /// Repeat every route and report success rates.
    Reach(ReachArgs),
    /// Score an oracle against ground truth over a frames directory.
    Eval(EvalArgs),
    /// Compare point-prompted and exhaustive segmentation times.
    Timing(TimingArgs),
    /// Rasterize a run directory or a stored frame to PNG.
    Render(RenderArgs),
    /// Serve the labeling API for a frames directory.
    Serve(ServeArgs),
    /// Generate a world file (plus its JSON sidecar).
    GenWorld(GenWorldArgs),
    /// Capture and segment frames from a world into a frames directory.
    Capture(CaptureArgs),
}

/// Config-file fields that may be overridden from the command line.
#[derive(Args, Debug)]
struct Overrides {
    /// Scenario config (TOML).
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    step_budget: Option<usize>,
    #[arg(long)]
    repetitions: Option<usize>,
}

impl Overrides {
    fn load(&self) -> Result<ScenarioConfig> {
        let mut cfg = ScenarioConfig::load(&self.config)
            .with_context(|| format!("loading {}", self.config.display()))?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(n) = self.step_budget {
            cfg.step_budget = n;
        }
        if let Some(n) = self.repetitions {
            cfg.repetitions = n;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args, Debug)]
struct RunArgs {
    #[command(flatten)]
    cfg: Overrides,
    /// Only run the route with this name.
    #[arg(long)]
    route: Option<String>,
    /// Output directory; one subdirectory per route.
    #[arg(long, default_value = "runs")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ReachArgs {
    #[command(flatten)]
    cfg: Overrides,
    /// Also write every run's log under this directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum OracleKind {
    Gt,
    Noisy,
    All,
    Extern,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    frames: PathBuf,
    #[arg(long, value_enum, default_value_t = OracleKind::Gt)]
    oracle: OracleKind,
    #[arg(long, default_value_t = 0.0)]
    p_fp: f64,
    #[arg(long, default_value_t = 0.0)]
    p_fn: f64,
    /// `all` or `hazard`.
    #[arg(long, default_value = "all")]
    fp_scope: String,
    /// Seed for oracle noise.
    #[arg(long, default_value_t = 0)]
    noise_seed: u64,
    /// External oracle command (repeat for arguments).
    #[arg(long = "oracle-cmd", num_args = 1..)]
    oracle_cmd: Vec<String>,
    /// External oracle base URL (`/oracle` is appended).
    #[arg(long)]
    oracle_url: Option<String>,
    /// `classes` or `labels`.
    #[arg(long, default_value = "classes")]
    truth: String,
    /// `snp` or `mnp`.
    #[arg(long, default_value = "mnp")]
    cardinality: String,
    /// `specific`, `general` or `full_context`.
    #[arg(long, default_value = "full_context")]
    style: String,
    /// `collage` or `annotated`.
    #[arg(long, default_value = "collage")]
    visual: String,
    #[arg(long, default_value_t = 0.5)]
    coverage: f64,
    /// Write the per-frame CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TimingArgs {
    /// Frames directory; omit to use the built-in analog frames.
    #[arg(long)]
    frames: Option<PathBuf>,
    /// Seed for the built-in analog frames.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Repetitions per frame (the median is reported).
    #[arg(long, default_value_t = 5)]
    reps: usize,
}

#[derive(Args, Debug)]
struct RenderArgs {
    /// A run directory (from `run`) or a stored frame JSON file.
    #[arg(long)]
    input: PathBuf,
    /// Comma-separated: terrain, masks, grid, global_path, trajectory, trace.
    #[arg(long, default_value = "terrain,grid,global_path,trajectory,trace")]
    layers: String,
    /// Scenario config naming the world of a run (required for run input).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 4)]
    scale: u32,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ServeArgs {
    #[arg(long)]
    frames: PathBuf,
    #[arg(long, default_value_t = 8080)]
    port: u16,
}

#[derive(Args, Debug)]
struct GenWorldArgs {
    #[arg(long)]
    seed: u64,
    /// World spec (TOML); defaults apply to absent fields.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct CaptureArgs {
    /// World file written by `gen-world`.
    #[arg(long)]
    world: PathBuf,
    #[arg(long, default_value_t = 50)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Sensor window side in cells.
    #[arg(long, default_value_t = 40)]
    window: usize,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run(a) => run(a),
        Command::Reach(a) => reach(a),
        Command::Eval(a) => eval(a),
        Command::Timing(a) => timing(a),
        Command::Render(a) => render(a),
        Command::Serve(a) => {
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(server::serve(&a.frames, a.port))
        }
        Command::GenWorld(a) => gen_world(a),
        Command::Capture(a) => capture(a),
    }
}

/// Parses a snake_case enum name the way the config files spell it.
fn parse_name<T: DeserializeOwned>(flag: &str, value: &str) -> Result<T> {
    serde_json::from_value(serde_json::Value::String(value.to_string()))
        .with_context(|| format!("invalid --{flag} `{value}`"))
}

fn run(a: RunArgs) -> Result<()> {
    let cfg = a.cfg.load()?;
    let world = cfg.world.load()?;
    let routes: Vec<_> = cfg
        .routes
        .iter()
        .filter(|r| a.route.as_deref().is_none_or(|n| n == r.name))
        .collect();
    if routes.is_empty() {
        bail!("no route matches {:?}", a.route);
    }
    let mut logs = Vec::new();
    for route in routes {
        let log = run_scenario(&cfg, &world, route, cfg.seed)?;
        let dir = a.out.join(&route.name);
        log.write_dir(&dir)?;
        let s = &log.summary;
        println!(
            "{}: {} after {} steps ({:.2} s), {} oracle queries -> {}",
            s.route,
            s.outcome.as_str(),
            s.elapsed_steps,
            s.sim_time,
            s.oracle_queries,
            dir.display()
        );
        logs.push(log);
    }
    fs::write(
        a.out.join("summary.csv"),
        RunLog::summary_csv(&logs.iter().collect::<Vec<_>>()),
    )?;
    Ok(())
}

fn reach(a: ReachArgs) -> Result<()> {
    let cfg = a.cfg.load()?;
    let world = cfg.world.load()?;
    let (report, logs) = reachability_suite(&cfg, &world)?;
    print!("{}", report.to_csv());
    if let Some(out) = a.out {
        for log in &logs {
            log.write_dir(&out.join(format!("{}_{}", log.summary.route, log.summary.seed)))?;
        }
        fs::write(out.join("reachability.csv"), report.to_csv())?;
        fs::write(
            out.join("summary.csv"),
            RunLog::summary_csv(&logs.iter().collect::<Vec<_>>()),
        )?;
    }
    Ok(())
}

fn load_frames(dir: &Path) -> Result<Vec<StoredFrame>> {
    let ids = list_frames(dir).with_context(|| format!("listing {}", dir.display()))?;
    if ids.is_empty() {
        bail!("no frames in {}", dir.display());
    }
    ids.into_iter().map(|id| Ok(read_frame(dir, id)?)).collect()
}

fn eval(a: EvalArgs) -> Result<()> {
    let frames = load_frames(&a.frames)?;
    let truth: TruthSource = parse_name("truth", &a.truth)?;
    let mut labels = HashMap::new();
    if truth == TruthSource::Labels {
        for f in &frames {
            if let Some(label) = read_label(&a.frames, f.frame_id)? {
                labels.insert(f.frame_id, label);
            }
        }
    }
    let oracle = match a.oracle {
        OracleKind::Gt => OracleConfig::Gt,
        OracleKind::All => OracleConfig::All,
        OracleKind::Noisy => OracleConfig::Noisy {
            p_fp: a.p_fp,
            p_fn: a.p_fn,
            fp_scope: parse_name::<FalsePositiveScope>("fp-scope", &a.fp_scope)?,
        },
        OracleKind::Extern => OracleConfig::Extern {
            command: a.oracle_cmd.clone(),
            url: a.oracle_url.clone(),
        },
    };
    oracle.validate()?;
    let prompt = PromptSpec {
        cardinality: parse_name("cardinality", &a.cardinality)?,
        style: parse_name("style", &a.style)?,
        visual_format: parse_name("visual", &a.visual)?,
        ..PromptSpec::default()
    };
    let mut oracle = oracle.build(a.noise_seed)?;
    let report = eval_suite(
        &frames,
        &labels,
        truth,
        oracle.as_mut(),
        None,
        &prompt,
        a.coverage,
    )?;
    match &a.out {
        Some(path) => fs::write(path, report.to_csv())?,
        None => print!("{}", report.to_csv()),
    }
    let fmt = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{v:.4}"));
    eprintln!(
        "frames {}  mIoU {}  mean rubric {}  missing labels {}",
        report.rows.len(),
        fmt(report.miou),
        fmt(report.mean_rubric),
        report.missing_labels.len()
    );
    Ok(())
}

fn timing(a: TimingArgs) -> Result<()> {
    let patches = match &a.frames {
        Some(dir) => load_frames(dir)?.into_iter().map(|f| f.patch).collect(),
        None => timing_analog_frames(a.seed),
    };
    let table = timing_compare(&patches, &SegmentationParams::default(), a.reps.max(1))?;
    print!("{}", table.to_csv());
    Ok(())
}

fn render(a: RenderArgs) -> Result<()> {
    let layers = parse_layers(&a.layers)?;
    let canvas = if a.input.is_dir() {
        let log = RunLog::read_dir(&a.input)?;
        let Some(config) = &a.config else {
            bail!("rendering a run needs --config to locate its world");
        };
        let world = ScenarioConfig::load(config)?.world.load()?;
        render_run(&world, &log, &layers, a.scale)
    } else {
        let text = fs::read_to_string(&a.input)
            .with_context(|| format!("reading {}", a.input.display()))?;
        let frame: StoredFrame = serde_json::from_str(&text)
            .with_context(|| format!("parsing {}", a.input.display()))?;
        render_frame(&frame, &layers, a.scale)?
    };
    fs::write(&a.out, canvas.png_bytes()?)?;
    Ok(())
}

fn gen_world(a: GenWorldArgs) -> Result<()> {
    let spec: WorldSpec = match &a.spec {
        Some(path) => toml::from_str(&fs::read_to_string(path)?)
            .with_context(|| format!("parsing {}", path.display()))?,
        None => WorldSpec::default(),
    };
    let world = generate_world(a.seed, &spec)?;
    if let Some(parent) = a.out.parent() {
        fs::create_dir_all(parent)?;
    }
    world.save(&a.out)?;
    println!(
        "{}x{} world -> {}",
        world.width,
        world.height,
        a.out.display()
    );
    Ok(())
}

fn capture(a: CaptureArgs) -> Result<()> {
    let world = TerrainWorld::load(&a.world)?;
    let frames = sample_frames(
        &world,
        a.count,
        a.seed,
        a.window,
        &SegmentationParams::default(),
    )?;
    for f in &frames {
        write_frame(&a.out, f)?;
    }
    println!("{} frames -> {}", frames.len(), a.out.display());
    Ok(())
}
