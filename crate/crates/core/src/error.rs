//! Error type shared by the whole crate.

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A line of an event text file could not be parsed.
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        /// 1-based line number.
        line: usize,
        msg: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// An operation that needs events received none.
    #[error("empty event slice: {0}")]
    EmptySlice(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// An explicit PDE step exceeded its stability bound, or a propagated
    /// field left the finite range.
    #[error("unstable PDE step {step} of {total}: {detail}")]
    Stability {
        /// 1-based sub-step (or bin) index.
        step: usize,
        total: usize,
        detail: String,
    },

    /// A cost or gradient evaluation produced a non-finite value.
    #[error("non-finite value in {0}")]
    NonFinite(String),

    /// The input admits no meaningful value for the requested quantity
    /// (zero normalizer, empty evaluation mask, and similar).
    #[error("degenerate input: {0}")]
    Degenerate(String),
}
