//! Ordinal-pattern encoding of price series and the statistics built on it.

mod pattern;
mod stats;

use thiserror::Error;

pub use pattern::{encode_values, EncodingParams, Pattern, MAX_DIM};
pub use stats::{
    chain_power, compute_stats, decline_persistence, mep_passes, pattern_counts, CiConfig,
    CiMethod, PatternStats, TransitionMatrix, MEP_THRESHOLD,
};

use crate::series::PriceSeries;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OrdinalError {
    #[error("series has {len} bars, need at least {required}")]
    SeriesTooShort { len: usize, required: usize },
    #[error("invalid encoding parameters: {0}")]
    InvalidParams(String),
    #[error("legitimate transitions need time delay 1, got {0}")]
    UnsupportedDelay(usize),
    #[error("entry-point statistics need embedding dimension 3, got {0}")]
    UnsupportedDimension(usize),
    #[error("no decline patterns observed; entry-point ratio undefined")]
    NoDecisionPatterns,
}

/// Encodes the closing prices of `series`.
pub fn encode(series: &PriceSeries, params: &EncodingParams) -> Result<Vec<Pattern>, OrdinalError> {
    encode_values(&series.closes(), params)
}

/// See [`Pattern::legitimate_successors`].
pub fn legitimate_successors(
    pattern: Pattern,
    params: &EncodingParams,
) -> Result<Vec<Pattern>, OrdinalError> {
    pattern.legitimate_successors(params)
}
