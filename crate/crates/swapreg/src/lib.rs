//! Full-swap-regret minimization over convex action sets.
//!
//! The crate is organized around a Blum–Mansour-style engine that maintains
//! one scaled external-regret subroutine per point of a discretization of a
//! convex body, plays the stationary distribution of the induced Markov
//! chain, and feeds each subroutine the loss scaled by the mass it received.
//! On top of the engine sit online calibration forecasters, structured-game
//! reductions, and an experiment harness with independent regret evaluators.

pub mod calibration;
pub mod engine;
pub mod games;
pub mod geometry;
pub mod harness;
pub mod losses;
pub mod oco;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("unsupported body family: {0}")]
    UnsupportedBody(String),
    #[error("unsupported dimension {0}")]
    UnsupportedDimension(usize),
    #[error("geometry inconsistency: {0}")]
    GeometryInconsistency(String),
    #[error("configuration error: {0}")]
    Configuration(String),
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error("infeasible point: gap {gap:.3e}")]
    Infeasible {
        gap: f64,
        /// Direction from the best hull approximation toward the query point;
        /// serves as an (approximate) separating certificate.
        direction: Vec<f64>,
    },
    #[error("unsupported evaluation: {0}")]
    Unsupported(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
