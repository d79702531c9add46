//! Error types shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum FieldError {
    #[error("field contains non-finite values")]
    InvalidField,
    #[error("grid mismatch: {0} vs {1} points")]
    GridMismatch(usize, usize),
    #[error("grid size {0} is not a power of two >= 64")]
    BadGridSize(usize),
    #[error("grid length must be positive, got {0}")]
    BadGridLength(f64),
    #[error("multiplier exponent {0} outside supported range [0, 4]")]
    BadExponent(f64),
}

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("iteration did not converge after {iterations} steps (residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("stabilising factor {factor:.3} left (0.5, 2) after {iterations} iterations")]
    Divergence { factor: f64, iterations: usize },
    #[error("rescaled profile width {width:.3e} below {min:.3e}: grid cannot resolve it")]
    Resolution { width: f64, min: f64 },
    #[error("bordered system is singular or too ill-conditioned")]
    SingularSystem,
    #[error("quadrature failed to converge (last error {0:.3e})")]
    Quadrature(f64),
    #[error("eigensolver failed: {0}")]
    Eigensolver(String),
    #[error("dense path requires n <= {limit}, got n = {n}")]
    DenseTooLarge { n: usize, limit: usize },
    #[error(transparent)]
    Field(#[from] FieldError),
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("wave ordering violated: z = z1 - z2 = {0:.3e} must be positive")]
    WaveOrdering(f64),
    #[error("separation {z:.3e} below the validity floor {min:.3e}")]
    SeparationTooSmall { z: f64, min: f64 },
    #[error("centers too close to the domain boundary (z1 = {z1:.3e}, z2 = {z2:.3e}, L = {l:.3e})")]
    BoundaryViolation { z1: f64, z2: f64, l: f64 },
    #[error("newton fit stagnated after {iterations} iterations (defect {defect:.3e})")]
    NoFit { iterations: usize, defect: f64 },
    #[error("weight transition region reaches the domain boundary (A = {a}, L = {l})")]
    DomainTooSmall { a: f64, l: f64 },
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Field(#[from] FieldError),
}
