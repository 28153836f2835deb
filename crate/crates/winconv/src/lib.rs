//! Std companion to `winconv-core`: checkpoint and image file formats,
//! CSV report writers, JSON run configuration, and the command
//! implementations behind the `winconv` binary.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod pgm;
pub mod report;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointError};
pub use config::RunConfig;
