use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, LrbnError>;

#[derive(Debug, Error)]
pub enum LrbnError {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("non-binary value {value} at index {index} where a binary vector is required")]
    NonBinary { index: usize, value: f64 },

    #[error("truncated {0}")]
    Truncated(&'static str),

    #[error("bad magic: expected {expected}, found {found}")]
    BadMagic { expected: String, found: String },

    #[error("version mismatch: found {found}, supported {supported}")]
    VersionMismatch { found: u32, supported: u32 },

    #[error("dimension inconsistency: {0}")]
    DimensionInconsistency(String),

    #[error("dimension overflow: {0}")]
    DimOverflow(String),

    #[error("{what} too large for exhaustive enumeration: {size} > {limit}")]
    TooLarge {
        what: &'static str,
        size: usize,
        limit: usize,
    },

    #[error("singular system: Gram matrix of size {size} has rank {rank} (rank deficiency {})", size - rank)]
    Singular { size: usize, rank: usize },

    #[error("empty data: {0}")]
    EmptyData(&'static str),

    #[error("non-finite value detected in {0}")]
    NonFinite(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("labels required but not present")]
    MissingLabels,

    #[error("invalid value: {0}")]
    InvalidValue(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub(crate) fn check_len(context: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(LrbnError::DimensionMismatch {
            context,
            expected,
            found,
        })
    }
}
