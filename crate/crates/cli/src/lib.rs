//! Experiment harness for the Hodgkin-Huxley STDP network: layered
//! configuration, train/eval/sweep/calibrate/inspect commands, CSV and SVG
//! output.

pub mod config;
pub mod error;
pub mod experiment;
pub mod svg;

pub use config::{ExperimentConfig, SubsetMode, ENV_PREFIX};
pub use error::CliError;
pub use experiment::{Datasets, RunSummary, SweepParam, SweepRow};
