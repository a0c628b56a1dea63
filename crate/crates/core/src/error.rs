use thiserror::Error;

/// Errors raised while building, discretizing, or solving a problem.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("malformed problem: {0}")]
    MalformedSpec(String),

    #[error("point ({x}, {y}) lies on a discontinuity line but no side was given")]
    OnDiscontinuityWithoutSide { x: f64, y: f64 },

    #[error("point ({x}, {y}) is outside the unit square")]
    OutOfDomain { x: f64, y: f64 },

    #[error("N = {0} must be at least 8 and divisible by 8")]
    BadN(usize),

    #[error("mesh geometry: {0}")]
    GeometryError(String),

    #[error("row ({i}, {j}) is {actual}, expected {expected}")]
    WrongKind {
        i: usize,
        j: usize,
        expected: &'static str,
        actual: &'static str,
    },

    #[error("row {0} of the assembled system is empty")]
    SingularStructure(usize),

    #[error("sparse factorization failed: {0}")]
    SingularMatrix(String),

    #[error("solution contains non-finite values")]
    NonFiniteSolution,

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("fine mesh does not nest the coarse mesh: {0}")]
    MeshMismatch(String),

    #[error("order estimate needs positive errors, got {0} and {1}")]
    NonPositiveError(f64, f64),

    #[error("configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
