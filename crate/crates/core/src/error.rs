use thiserror::Error;

use crate::expr::{DomainError, ParseError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error(transparent)]
    Parse(#[from] ParseError),

    #[error(transparent)]
    Domain(#[from] DomainError),

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("invalid time grid: {0}")]
    InvalidTimeGrid(String),

    #[error("invalid CDF grid: {0}")]
    InvalidGrid(String),

    #[error("stability violation: h * n* = {product} >= 1 (margin {margin})")]
    StabilityViolation { margin: f64, product: f64 },

    #[error("segmentation failure: {0}")]
    SegmentationFailure(String),

    #[error("control density is negative or non-finite at s = {at}: n(s) = {value}")]
    NonFiniteDensity { at: f64, value: f64 },

    #[error("mesh mismatch: {0}")]
    MeshMismatch(String),

    #[error("mesh too short: {0}")]
    MeshTooShort(String),

    #[error("delta1 = {delta1} must be at least 2 * delta = {min}")]
    Delta1TooSmall { delta1: f64, min: f64 },

    #[error("quadrature failed to converge: {0}")]
    QuadratureFailure(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

impl Error {
    /// True for failures caused by numerics rather than malformed user input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::StabilityViolation { .. }
                | Error::Domain(_)
                | Error::NonFiniteDensity { .. }
                | Error::QuadratureFailure(_)
                | Error::MeshTooShort(_)
                | Error::SegmentationFailure(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
