use num_complex::Complex64;
use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid lattice: {0}")]
    InvalidLattice(String),

    #[error("fields live on different lattices")]
    LatticeMismatch,

    #[error("expected {expected} values, got {got}")]
    ShapeMismatch { expected: usize, got: usize },

    #[error("multiplier is undefined (non-finite) at frequency {frequency:?}")]
    UndefinedSymbol { frequency: Vec<f64> },

    #[error("axis {axis} out of range for a {dim}-dimensional lattice")]
    AxisOutOfRange { axis: usize, dim: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("invalid Lamé coefficients: {0}")]
    InvalidLameParams(String),

    #[error("z = {z} is within {distance:e} of [0, inf), below the floor {floor:e}")]
    NearSpectrum {
        z: Complex64,
        distance: f64,
        floor: f64,
    },

    #[error(
        "dense assembly of {unknowns} unknowns needs {required} bytes but the budget is {budget} bytes; use a smaller n"
    )]
    BudgetExceeded {
        unknowns: usize,
        required: u64,
        budget: u64,
    },

    #[error("hypothesis violated for {theorem}: {inequality}")]
    HypothesisViolation { theorem: String, inequality: String },

    #[error("ensemble is empty")]
    EmptyEnsemble,

    #[error("ensemble member {member} has no discrete eigenvalue")]
    NoEigenvalues { member: usize },

    #[error(
        "iteration did not converge after {iterations} steps; last bracket [{lower}, {upper}]"
    )]
    NonConvergence {
        iterations: usize,
        lower: f64,
        upper: f64,
    },

    #[error("linear algebra failure: {0}")]
    LinearAlgebra(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
