//! Bound states of curved two-dimensional quantum waveguides and their Stark resonances.
//!
//! The strip is straightened into `(s, u) ∈ ℝ × (0, d)`, discretized by second-order finite
//! differences on a truncated tensor grid, and the resonances are found as complex eigenvalues
//! of the exterior-distorted operator `H_θ(F)` with `θ = iβ`.

pub mod distortion;
pub mod eigensolve;
pub mod geometry;
pub mod hamiltonian;
pub mod resonance;
pub mod validation;

pub use num_complex::Complex64;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("hypothesis failure: {0}")]
    Hypothesis(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("singular shift: zero pivot at row {row}")]
    Singular { row: usize },
    #[error("eigensolver did not converge after {iterations} restarts (best residual {best_residual:e})")]
    NotConverged { iterations: usize, best_residual: f64 },
    #[error("no eigenvalue below the threshold {threshold}")]
    NoBoundState { threshold: f64 },
    #[error("no resonance within {radius:e} of {center} for any beta")]
    ResonanceNotFound { center: f64, radius: f64 },
    #[error("distortion too strong: min |1 + theta f'| = {min_modulus}")]
    DistortionTooStrong { min_modulus: f64 },
    #[error("domain too small: {0}")]
    DomainTooSmall(String),
    #[error("width-law fit: {0}")]
    Fit(String),
}

pub type Result<T> = std::result::Result<T, Error>;
