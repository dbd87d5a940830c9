use thiserror::Error;

/// Errors raised by the checkers, constructors and solvers of this crate.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("vector is not unit length (|v| = {norm})")]
    NonUnitNormal { norm: f64 },

    #[error("degenerate body: normals {subset:?} are linearly dependent (|det| = {det:e})")]
    DegenerateBody { subset: Vec<usize>, det: f64 },

    #[error("empty sample set: {0}")]
    EmptySamples(&'static str),

    #[error("non-finite or out-of-bound coefficient at {location}")]
    BadCoefficient { location: String },

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("linear solver did not converge after {iterations} iterations (relative residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("Picard iteration did not converge; iterate differences {history:?}")]
    PicardNoConvergence { history: Vec<f64> },

    #[error("mode xi = {xi:?}: eigenvalue split is {stable}/{unstable} with min |Re lambda| = {min_re:e}")]
    SpectralSplit {
        xi: Vec<f64>,
        stable: usize,
        unstable: usize,
        min_re: f64,
    },

    #[error("mode xi = {xi:?}: boundary matching system is singular")]
    MatchingSingular { xi: Vec<f64> },

    #[error("witness precondition failed: {0}")]
    WitnessPrecondition(String),

    #[error("no admissible beta for alpha = {alpha:e}; try alpha = {suggested_alpha:e}")]
    WitnessBracket { alpha: f64, suggested_alpha: f64 },

    #[error("kernel is not normalized at point {label} (defect {defect:e})")]
    KernelNotNormalized { label: String, defect: f64 },

    #[error("boundary value at node {node} lies outside the body (margin {margin:e})")]
    BoundaryOutsideBody { node: usize, margin: f64 },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
