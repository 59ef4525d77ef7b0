use std::io;

use thiserror::Error;

/// Errors produced anywhere in the pipeline.
///
/// The variants are coarse on purpose: the command-line front end maps
/// them onto its exit codes (usage, data, training).
#[derive(Debug, Error)]
pub enum Error {
    /// Inconsistent shapes or an invalid model/generator configuration.
    #[error("configuration error: {0}")]
    Config(String),
    /// An API was called in a way its contract forbids.
    #[error("usage error: {0}")]
    Usage(String),
    /// Input data that cannot be processed (wrong length, constant series, bad CSV).
    #[error("data error: {0}")]
    Data(String),
    /// Training diverged or could not start.
    #[error("training error: {0}")]
    Training(String),
    /// Checkpoint bytes that do not decode.
    #[error("checkpoint format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
