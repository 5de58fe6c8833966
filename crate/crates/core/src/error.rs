use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid mixture component: {0}")]
    InvalidComponent(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("noise level out of range: alpha_bar = {0} (must lie in [0, 1])")]
    InvalidNoiseLevel(f64),

    #[error("class index {class} out of range for a model with {num_classes} classes")]
    ClassOutOfRange { class: usize, num_classes: usize },

    #[error("invalid times: {0}")]
    InvalidTimes(String),

    #[error(
        "schedule recurrence exceeds 1 - 1e-12 at n = {n} (alpha_bar = {alpha_bar}); try a smaller c1"
    )]
    ScheduleOverflow { n: usize, alpha_bar: f64 },

    #[error("invalid schedule parameters: {0}")]
    InvalidSchedule(String),

    #[error("step index {n} out of range 1..={len}")]
    StepOutOfRange { n: usize, len: usize },

    #[error("invalid guidance: {0}")]
    InvalidGuidance(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error(
        "guidance did not improve the mean reciprocal probability \
         (baseline mean {baseline_mean}, guided mean {guided_mean})"
    )]
    NoImprovement { baseline_mean: f64, guided_mean: f64 },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}:{line}:{column}: {message}")]
    ParseFile {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("cannot write output to {path}: {source}")]
    Output {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
