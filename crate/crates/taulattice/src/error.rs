use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("weight is not integrable: {0}")]
    NonIntegrableWeight(String),

    #[error("quadrature tolerance {tol:e} unreachable (stalled at {panels} panels)")]
    ToleranceUnreachable { tol: f64, panels: usize },

    #[error("Pfaffian of odd dimension {0} is undefined")]
    OddDimension(usize),

    #[error("matrix is not antisymmetric (max |a_ij + a_ji| = {0:e})")]
    NotAntisymmetric(f64),

    #[error("moment matrix ill-conditioned: Cholesky failed at pivot {0}")]
    IllConditioned(usize),

    #[error("polynomial degree {degree} exceeds the cap {cap}")]
    DegreeCap { degree: usize, cap: usize },

    #[error("finite-difference step too large: Richardson disagreement {disagreement:e} exceeds {tol:e}")]
    StepTooLarge { disagreement: f64, tol: f64 },

    #[error("leading skew minor of size {0} is singular")]
    SingularMinor(usize),

    #[error("commutator violates the Lax structure at ({row}, {col}): {value:e}")]
    StructureViolation { row: usize, col: usize, value: f64 },

    #[error("adaptive step underflow at t = {t} (h = {h:e})")]
    StepUnderflow { t: f64, h: f64 },

    #[error("grid too coarse: Richardson disagreement {disagreement:e} exceeds {limit:e}")]
    GridTooCoarse { disagreement: f64, limit: f64 },

    #[error("unsupported oracle kind: {0}")]
    UnsupportedKind(String),

    #[error("characteristic map is not monotone near x = {x} (past the breaking time)")]
    PreBreakingViolated { x: f64 },

    #[error("field diverged: |{field}| = {value:e} exceeds bound {bound:e}")]
    DivergedField { field: String, value: f64, bound: f64 },

    #[error("tensor index ({i}, {j}, {k}) outside the guarded window |index| <= {limit}")]
    IndexOutOfWindow { i: i32, j: i32, k: i32, limit: i32 },

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, Error>;
