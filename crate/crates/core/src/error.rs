use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("time step must be positive and finite, got {0}")]
    InvalidTimeStep(f64),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("spike time regressed: {t} ms precedes last spike at {last} ms")]
    TimeRegression { t: f64, last: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("stimulus onset {onset} ms lies outside the window [0, {window})")]
    StimulusOutsideWindow { onset: f64, window: f64 },

    #[error("neuron index {index} out of range (limit {limit})")]
    NeuronOutOfRange { index: usize, limit: usize },

    #[error("stimulus schedule ends at {end} ms, beyond the step duration of {duration} ms")]
    ScheduleOverrun { end: f64, duration: f64 },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("label {0} is not a digit")]
    InvalidLabel(u8),

    #[error("{what}: bad magic number {found:#010x}, expected {expected:#010x}")]
    BadMagic {
        what: &'static str,
        found: u32,
        expected: u32,
    },

    #[error("{what}: file truncated (expected {expected} bytes, found {found})")]
    Truncated {
        what: &'static str,
        expected: u64,
        found: u64,
    },

    #[error("{what}: {extra} unexpected trailing bytes")]
    TrailingBytes { what: &'static str, extra: u64 },

    #[error("image count {images} does not match label count {labels}")]
    CountMismatch { images: usize, labels: usize },

    #[error("images must be 28x28, found {rows}x{cols}")]
    BadImageShape { rows: u32, cols: u32 },

    #[error("snapshot: {0}")]
    Snapshot(String),

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}
