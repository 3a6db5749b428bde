//! Command-line harness and the labeling HTTP service.

pub mod server;
