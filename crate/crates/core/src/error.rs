use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("degree mismatch: {left} vs {right}")]
    DegreeMismatch { left: usize, right: usize },

    #[error("degree overflow: {j} + {k} exceeds dimension {n}")]
    DegreeOverflow { j: usize, k: usize, n: usize },

    #[error("invalid degree {k} for dimension {n}")]
    InvalidDegree { k: usize, n: usize },

    #[error("dimension {0} exceeds the default cap of 4; construct with the large-dimension flag")]
    DimensionTooLarge(usize),

    #[error("cannot contract a 0-form")]
    ContractZeroForm,

    #[error("exterior derivative of a top-degree form")]
    TopDegreeDerivative,

    #[error("invalid multi-index {indices:?} for dimension {n}")]
    InvalidMultiIndex { indices: Vec<usize>, n: usize },

    #[error("channel count {got} does not match binomial({n}, {k}) = {expected}")]
    ChannelCount { n: usize, k: usize, expected: usize, got: usize },

    #[error("L^p exponent must be >= 1, got {0}")]
    InvalidExponent(f64),

    #[error("Hölder exponent must lie in (0, 1], got {0}")]
    InvalidHolderExponent(f64),

    #[error("coincident probe pair at {0:?}")]
    CoincidentProbes(Vec<f64>),

    #[error("invalid quadrature grid: {0}")]
    InvalidGrid(String),

    #[error("point {0:?} lies outside the domain of the map")]
    OutsideDomain(Vec<f64>),

    #[error("mollifier scale out of range: {0}")]
    InvalidEpsilon(f64),

    #[error("test form support is not contained in the quadrature box")]
    SupportOutsideGrid,

    #[error("sweep needs at least {needed} entries, got {got}")]
    SweepTooShort { needed: usize, got: usize },

    #[error("epsilon list must be strictly decreasing and below 1")]
    InvalidEpsilonList,

    #[error("time grid must be non-empty and strictly increasing")]
    InvalidTimeGrid,

    #[error("time {0} is not a node of the time grid")]
    TimeOffGrid(f64),

    #[error("empty ensemble")]
    EmptyEnsemble,

    #[error("{flagged} of {total} trajectories were flagged (limit 1%)")]
    TooManyFlagged { flagged: usize, total: usize },

    #[error("degenerate pushed simplex: Gram determinant {0:e}")]
    DegenerateSimplex(f64),

    #[error("point {x:?} is outside the expanding ball at t = {t}")]
    OutsideBall { t: f64, x: Vec<f64> },

    #[error("the origin has no characteristic time")]
    AtOrigin,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("channel shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("noise amplitude must be positive when assertions are enabled")]
    ZeroNoiseAmplitude,

    #[error("io: {0}")]
    Io(String),

    #[error("config: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
