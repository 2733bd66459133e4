use thiserror::Error;

/// Errors surfaced by model construction, closed-form evaluation and the
/// numerical routines. Absence of a solution is not an error where the
/// domain treats it as a value (e.g. no attainable attachment percentile).
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// No shape in the family's valid range matches the requested moments.
    #[error("infeasible calibration: {0}")]
    InfeasibleCalibration(String),

    /// Requested raw moment does not exist for the given shape.
    #[error("moment of order {order} diverges for shape {shape}")]
    MomentDivergence { order: u32, shape: f64 },

    #[error("quadrature failed to reach tolerance {tol:e} on [{lo}, {hi}]")]
    QuadratureFailure { lo: f64, hi: f64, tol: f64 },

    /// More than two positive intervals detected in the layer scan; the
    /// pricing regime violates monotonicity or the scan hit numerical noise.
    #[error("layer structure violation: {0} positive intervals detected")]
    StructureViolation(usize),

    /// Expected surplus is non-positive over the whole search interval.
    #[error("no feasible contract: expected surplus is non-positive everywhere")]
    AllInfeasible,

    /// Derivative of the margin curve vanishes where a strictly negative
    /// slope is required.
    #[error("degenerate derivative: K'(1-delta) = {0:e} is not strictly negative")]
    DegenerateDerivative(f64),

    #[error("need at least {need} usable points, have {have}")]
    InsufficientPoints { need: usize, have: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
