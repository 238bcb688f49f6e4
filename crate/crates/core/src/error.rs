//! Crate-wide error type.

use thiserror::Error;

/// Errors raised by constructors, decompositions and the spectral pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix data length {len} does not match {rows}x{cols}")]
    ShapeMismatch { rows: usize, cols: usize, len: usize },

    #[error("expected a square matrix, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("dimension mismatch: {left_rows}x{left_cols} is incompatible with {right_rows}x{right_cols}")]
    DimensionMismatch {
        left_rows: usize,
        left_cols: usize,
        right_rows: usize,
        right_cols: usize,
    },

    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("matrix is not Hermitian: deviation {deviation:.3e} exceeds tolerance {tolerance:.3e}")]
    NotHermitian { deviation: f64, tolerance: f64 },

    #[error("eigenvalue iteration did not converge within {iterations} steps")]
    NoConvergence { iterations: usize },

    #[error("scalar function undefined (non-finite) at eigenvalue {eigenvalue:.6e}")]
    UndefinedAtEigenvalue { eigenvalue: f64 },

    #[error("matrix is singular: pivot magnitude {pivot:.3e} at elimination step {step}")]
    Singular { step: usize, pivot: f64 },

    #[error("spectral margin {margin:.3e} from the imaginary axis is below the required {required:.3e}")]
    EigenvalueNearAxis { margin: f64, required: f64 },

    #[error("operator has no spectral gap at zero: min |eigenvalue| = {min_abs:.3e}")]
    NoGap { min_abs: f64 },

    #[error("form-bound constants must satisfy a >= 0, b >= 0, a + b > 0 (got a = {a}, b = {b})")]
    DegenerateFormBound { a: f64, b: f64 },

    #[error("contour quadrature did not stabilize: residual {residual:.3e} at {node_count} nodes")]
    QuadratureNotConverged { node_count: usize, residual: f64 },

    #[error("quadrature scheme invalid: {reason}")]
    BadQuadratureScheme { reason: String },

    #[error("series contraction factor {factor:.6} is not below one")]
    ContractionTooLarge { factor: f64 },

    #[error("graph position failed: restricted projection has smallest singular value {sigma_min:.3e} < {required:.3e}")]
    GraphPosition { sigma_min: f64, required: f64 },

    #[error("subspace ranks differ: {left} vs {right}")]
    RankMismatch { left: usize, right: usize },

    #[error("spectral radius {radius:.6} of the coupling product is not below one")]
    SpectralRadiusTooLarge { radius: f64 },

    #[error("series did not reach the requested tolerance within {terms} terms")]
    SeriesTooSlow { terms: usize },

    #[error("subspace distance {distance:.6} is not below one; no direct rotation exists")]
    SubspacesTooFar { distance: f64 },

    #[error("contraction bound {rho:.6} is not below the admissible limit {limit}")]
    RhoTooLarge { rho: f64, limit: f64 },

    #[error("combined rotation angle {angle:.6} rad reaches pi/2; bound undefined")]
    AngleTooLarge { angle: f64 },

    #[error("parameter out of range: {what}")]
    ParameterOutOfRange { what: String },

    #[error("coupling magnitude {gamma_abs:.6} is outside the admissible disk (radius {gamma_max:.6})")]
    CouplingTooLarge { gamma_abs: f64, gamma_max: f64 },

    #[error("circle sampling too coarse: {node_count} nodes for polynomial order {order} (need at least {required})")]
    NodeCountTooSmall {
        node_count: usize,
        order: usize,
        required: usize,
    },

    #[error("circle-sampling aliasing estimate {estimate:.3e} exceeds {bound:.3e}; reduce the sample radius")]
    AliasingTooLarge { estimate: f64, bound: f64 },

    #[error("computed result failed its own consistency check: {what} residual {residual:.3e} exceeds {tolerance:.3e}")]
    PostconditionFailed {
        what: &'static str,
        residual: f64,
        tolerance: f64,
    },

    #[error("invalid matrix JSON: {0}")]
    Parse(String),
}

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
