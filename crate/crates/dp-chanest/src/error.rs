//! Crate-wide error type.

use std::path::PathBuf;
use thiserror::Error;

/// Errors produced by synthesis, estimation and the benchmark harness.
#[derive(Debug, Error)]
pub enum Error {
    /// Matrix or tensor shapes are inconsistent with the operation.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// An argument is outside its valid range.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Non-finite (NaN/Inf) values where finite data is required.
    #[error("non-finite values in {0}")]
    NonFinite(&'static str),

    /// A factor column is identically zero, so no angle can be extracted.
    #[error("factor column for path {path} has zero norm")]
    ZeroColumn { path: usize },

    /// The rebuilt steering matrix does not have full column rank.
    #[error(
        "steering matrix is rank deficient (sigma_min/sigma_max = {ratio:.3e}); \
         reduce the path count below K = {k}"
    )]
    RankDeficient { k: usize, ratio: f64 },

    /// The requested path count exceeds what the folding bound supports.
    #[error(
        "K = {k} is infeasible for geometry ({m_r},{m_x},{m_y}): \
         the folding bound supports at most {bound} paths"
    )]
    InfeasiblePaths {
        k: usize,
        m_r: usize,
        m_x: usize,
        m_y: usize,
        bound: usize,
    },

    /// A shift-invariance selection lost column rank; the plan is unusable.
    #[error("selection operator along dimension {dim} is rank deficient; try a different folding plan")]
    SelectionRankDeficient { dim: &'static str },

    /// NMSE is undefined against a zero reference channel.
    #[error("NMSE reference channel has zero norm")]
    ZeroReference,

    /// Benchmark configuration is malformed.
    #[error("config error: {0}")]
    Config(String),

    /// Channel file violates the `dp-chanest-v1` format.
    #[error("channel file {path}: {msg}")]
    ChannelFile { path: PathBuf, msg: String },

    /// I/O failure, annotated with the offending path.
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
