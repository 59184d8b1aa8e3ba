//! Experiment runner: ground-truth simulation, filter runs, CSV/SVG artifacts.

pub mod config;
pub mod experiment;
pub mod output;
pub mod plot;

pub use config::{ExperimentConfig, FilterKind, ResolvedExperiment};
pub use experiment::{compare_timing, plot_artifacts, run_experiment, run_trial, RunArtifacts, TimingSummary};
