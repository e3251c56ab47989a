use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("flow path index {index} out of range (network has {n_paths} paths)")]
    FlowPathIndex { index: usize, n_paths: usize },

    #[error("time step {dt} s exceeds training window T = {window} s")]
    TimeStepExceedsWindow { dt: f64, window: f64 },

    #[error("non-finite loss at collocation point {index}")]
    NonFiniteLoss { index: usize },

    #[error("trajectory grids differ: {0}")]
    GridMismatch(String),

    #[error("collocation set must not be empty")]
    EmptyBatch,

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
