use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("unknown column `{0}`")]
    UnknownColumn(String),

    #[error("invalid sample: {0}")]
    InvalidSample(String),

    #[error("invalid checkerboard: {0}")]
    InvalidCheckerboard(String),

    #[error("index {index} out of range for resolution {resolution}")]
    IndexOutOfRange { index: usize, resolution: usize },

    #[error("argument {value} outside the domain {domain}")]
    Domain { value: f64, domain: &'static str },

    #[error("phi({at}) = {value}, expected 0")]
    NotZeroAtZero { at: f64, value: f64 },

    #[error("not convex: phi(({a} + {b})/2) exceeds the chord by {excess:e}")]
    NotConvex { a: f64, b: f64, excess: f64 },

    #[error("not strictly convex at 0: (phi(-{eps}) + phi({eps}))/2 - phi(0) = {gap:e}")]
    NotStrictlyConvexAtZero { eps: f64, gap: f64 },

    #[error("normalizer is not positive ({0:e}): degenerate response or inadmissible function")]
    NormalizerNotPositive(f64),

    #[error("copula model {model}: {message}")]
    Model { model: String, message: String },

    #[error("cannot parse descriptor `{0}`")]
    Descriptor(String),

    #[error("invalid configuration: {0}")]
    Config(String),
}

impl Error {
    /// True for errors that signal a violated mathematical hypothesis rather
    /// than malformed input.
    pub fn is_hypothesis_violation(&self) -> bool {
        matches!(
            self,
            Error::NormalizerNotPositive(_)
                | Error::NotZeroAtZero { .. }
                | Error::NotConvex { .. }
                | Error::NotStrictlyConvexAtZero { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
