use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("frequency response is singular at s = {s}")]
    SingularAtFrequency { s: Complex64 },

    #[error("numerical computation failed: {0}")]
    ComputationFailed(String),

    #[error("section {index} is improper: leading denominator coefficient is zero")]
    ImproperSection { index: usize },

    #[error("section {index} has a pole at {pole} outside the open left half-plane")]
    UnstableSection { index: usize, pole: f64 },

    #[error("det(I + P2~ P1) vanishes on the contour near s = {s}")]
    DetVanishesOnContour { s: Complex64 },

    #[error("phase step on the contour near s = {s} stays above pi/2 after maximal refinement")]
    PhaseJumpTooLarge { s: Complex64 },

    #[error("feedback loop is ill-posed: I - K D is singular")]
    IllPosedLoop,

    #[error("closed loop is not internally stable")]
    UnstableLoop,

    #[error("allowable subspace for eigenvalue {eigenvalue} is empty")]
    EmptySubspace { eigenvalue: Complex64 },

    #[error(
        "eigenvector entry {state_index} of mode {mode} reached {achieved}, outside [{lo}, {hi}]"
    )]
    BoundViolation {
        mode: usize,
        state_index: usize,
        achieved: f64,
        lo: f64,
        hi: f64,
    },

    #[error("CR is ill-conditioned (kappa = {kappa:e})")]
    IllConditioned { kappa: f64 },

    #[error("gene {index} = {value} lies outside [{lo}, {hi}]")]
    OutOfBox {
        index: usize,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("trace diverged at t = {time} s")]
    DivergentTrace { time: f64 },

    #[error("invalid frequency grid: {0}")]
    InvalidGrid(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
