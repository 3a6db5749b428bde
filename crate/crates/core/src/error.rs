use thiserror::Error;

/// Errors raised across the navigation stack.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid world spec: {0}")]
    InvalidWorldSpec(String),

    #[error("non-finite input: {0}")]
    NonFinite(&'static str),

    #[error("pose ({x:.3}, {y:.3}) lies outside the world")]
    PoseOutsideWorld { x: f64, y: f64 },

    #[error("dimension mismatch: expected {expected:?}, got {actual:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },

    #[error("invalid prompt grid: {0}")]
    InvalidPromptGrid(String),

    #[error("mask {0} is empty; centroid undefined")]
    EmptyMask(usize),

    #[error("oracle response selected no valid mask index")]
    NoDrivableSelection,

    #[error("oracle failure: {0}")]
    Oracle(String),

    #[error("point ({x}, {y}) lies outside the grid extent")]
    OutOfExtent { x: f64, y: f64 },

    #[error("planner init failed: {0}")]
    PlannerInit(String),

    #[error("no path")]
    NoPath,

    #[error("trajectory needs at least {needed} poses, got {got}")]
    TrajectoryTooShort { needed: usize, got: usize },

    #[error("unknown render layer `{0}`")]
    UnknownLayer(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("malformed file {path}: {reason}")]
    Format { path: String, reason: String },

    #[error("unknown frame {0}")]
    UnknownFrame(u64),

    #[error("label version conflict: client has {client}, server has {server}")]
    VersionConflict { client: u64, server: u64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
