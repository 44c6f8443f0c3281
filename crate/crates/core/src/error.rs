//! Shared error type for the toolkit.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A word contains a symbol outside the alphabet of the system.
    #[error(
        "invalid word: symbol {symbol} at position {position} not in alphabet of size {alphabet}"
    )]
    InvalidWord {
        symbol: usize,
        position: usize,
        alphabet: usize,
    },

    /// An enumeration would exceed the configured atom cap.
    #[error("cap exceeded: {needed} items requested, cap is {cap}")]
    CapExceeded { needed: u128, cap: usize },

    /// A matrix fails the orthogonality / determinant +1 checks.
    #[error("not a rotation: {0}")]
    NotARotation(String),

    /// An operation requires a different rotation-group classification.
    #[error("wrong rotation-group classification: {0}")]
    WrongClassification(String),

    /// The rotation group could not be classified and the caller did not
    /// assert density.
    #[error("rotation group undetermined; pass an explicit density assertion to proceed")]
    Undetermined,

    /// A weight model failed validation.
    #[error("invalid weight model: {0}")]
    InvalidModel(String),

    /// A cascade realization died out (zero total mass), possibly after the
    /// allowed number of re-seeded retries.
    #[error("cascade extinct after {rejections} rejected seed(s)")]
    Extinct { rejections: usize },

    /// The percolation law has mean offspring number at most one.
    #[error("subcritical percolation: mean offspring {mean} <= 1")]
    Subcritical { mean: f64 },

    /// Root finding failed because the defining function has no sign change.
    #[error("no root: {0}")]
    NoRoot(String),

    /// The denominator of a dimension formula is too close to zero.
    #[error("degenerate denominator {value} in dimension formula")]
    DegenerateDenominator { value: f64 },

    /// A ball query needed positive mass but found none.
    #[error("empty ball at radius {radius}")]
    EmptyBall { radius: f64 },

    /// No queried radius produced usable ball mass around a point.
    #[error("empty neighborhood: no radius down to {r_min} captured mass")]
    EmptyNeighborhood { r_min: f64 },

    /// Too few scales survived filtering for a log-log regression.
    #[error("insufficient range: {got} usable scales, need at least {need}")]
    InsufficientRange { got: usize, need: usize },

    /// Operand dimensions disagree.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A slab query captured no atoms.
    #[error("empty slab of half-width {width}")]
    EmptySlab { width: f64 },

    /// A smooth map is numerically singular on the sampled support.
    #[error(
        "singular point detected: smallest singular value {sigma} at sampled support point {index}"
    )]
    SingularPointDetected { sigma: f64, index: usize },

    /// Excluding the pin left no atoms to measure.
    #[error("exclusion empty: no atoms remain after removing the pinned region")]
    ExclusionEmpty,

    /// A configuration value is rejected.
    #[error("invalid config: {field}: {reason}")]
    ConfigInvalid { field: String, reason: String },

    /// A parameter sweep declares more than one grid.
    #[error("multiple grids: {0}")]
    MultipleGrids(String),
}
