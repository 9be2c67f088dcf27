//! Experiment front end: configuration documents, the named studies, and
//! result persistence.

pub mod config;
pub mod studies;

pub use config::{ExperimentConfig, Study};
pub use studies::{diagnose_trajectory, replay_pulse, run_study, PulseDocument, ResultManifest, RunOptions};
