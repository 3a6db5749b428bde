//! Deterministic off-road navigation stack.
//!
//! Pipeline per perception frame: [`world`] sensor patch → [`segmentation`]
//! masks → [`drivability`] oracle selection → [`mapping`] occupancy update →
//! [`planning`] (D* Lite global, Hybrid A* local) → [`control`] (Stanley + PID).
//! [`harness`] ties these into closed-loop scenarios and benchmarks.

pub mod control;
pub mod drivability;
pub mod error;
pub mod harness;
pub mod mapping;
pub mod mask;
pub mod planning;
pub mod render;
pub mod segmentation;
pub mod world;

pub use error::{Error, Result};
