//! Configuration, orchestration, file formats and rendering.

pub mod commands;
pub mod config;
pub mod io;
pub mod manifest;
pub mod render;

pub use commands::{run, Command, RunSummary};
pub use config::PipelineConfig;
pub use io::load_measured_jsi;
