//! Error type shared across the crate.

use thiserror::Error;

/// Everything that can go wrong while validating inputs or running a
/// reduction.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A token matrix contains NaN or infinity; payload is the row index.
    #[error("non-finite value in token row {0}")]
    NonFinite(usize),
    /// Grid geometry does not match the number of visual-tagged tokens.
    #[error("grid is {rows}x{cols} but there are {visual} visual tokens")]
    GridMismatch {
        rows: usize,
        cols: usize,
        visual: usize,
    },
    /// Zero tokens or zero embedding dimension.
    #[error("token matrix is empty")]
    EmptyMatrix,
    /// Auxiliary key/value features required by the strategy are missing
    /// or have the wrong row count.
    #[error("pivot strategy requires auxiliary features: {0}")]
    MissingAux(&'static str),
    /// An attention map is required by the strategy but absent.
    #[error("pivot strategy requires an attention map")]
    MissingAttention,
    /// An attention map fails the row-stochastic check.
    #[error("attention row {row} sums to {sum}, expected 1 within 1e-4")]
    NotRowStochastic { row: usize, sum: f64 },
    /// A modality quota asks for more pivots than that modality has tokens.
    #[error("quota of {requested} exceeds {available} tokens of that modality")]
    QuotaExceedsModality { requested: usize, available: usize },
    /// More pivots requested than tokens exist.
    #[error("pivot count {k} exceeds token count {n}")]
    KExceedsN { k: usize, n: usize },
    /// Retention budget outside the feasible range.
    #[error("budget {budget} outside feasible range [{min}, {max}]")]
    BudgetOutOfRange {
        budget: usize,
        min: usize,
        max: usize,
    },
    /// Invalid reduction configuration (bad ratio, zero k, quota sum, ...).
    #[error("invalid configuration: {0}")]
    BadConfig(String),
    /// A retained subset passed to an analysis routine is empty.
    #[error("retained set is empty")]
    EmptyRetention,
    /// Normalized-mode verification demanded on tokens with unequal norms.
    #[error("token norms differ by more than 1e-4 relative; normalized mode does not apply")]
    NotNormalized,
    /// Bound verification requires a max-aggregator reduction result.
    #[error("bound verification requires a result produced by the max aggregator")]
    WrongAggregator,
    /// Feature evaluation over an empty token set.
    #[error("token set is empty")]
    EmptySet,
    /// Synthetic generator parameters out of range.
    #[error("bad generator parameters: {0}")]
    BadParams(String),
    /// Brute-force oracle guard: instance too large.
    #[error("instance size {n} exceeds the brute-force limit of {limit}")]
    TooLarge { n: usize, limit: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
