use std::path::PathBuf;

use thiserror::Error;

/// Errors shared across the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Block sizes must be powers of two (and at least 2) so the fast
    /// transform factorization and the chirp-shift identities apply.
    #[error("block size {0} is not a power of two >= 2")]
    InvalidBlockSize(usize),

    #[error("length mismatch: expected {expected} samples, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("matrix must be {expected}x{expected}, got {rows}x{cols}")]
    DimensionMismatch {
        expected: usize,
        rows: usize,
        cols: usize,
    },

    #[error("chirp index {index} out of range for {n} chirps")]
    ChirpIndexOutOfRange { index: usize, n: usize },

    #[error("path delay of {delay_taps} taps does not fit in a block of {n} samples")]
    DelayExceedsBlock { delay_taps: usize, n: usize },

    #[error("cyclic prefix of {cp_taps} taps is shorter than the maximum path delay of {max_delay_taps} taps")]
    InsufficientCyclicPrefix {
        cp_taps: usize,
        max_delay_taps: usize,
    },

    #[error("non-finite sample in input")]
    NonFiniteInput,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid profile: {0}")]
    InvalidProfile(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {message}", path.display())]
    Parse { path: PathBuf, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;
