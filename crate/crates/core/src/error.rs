use thiserror::Error;

/// Errors raised by the scattering and continuum-state machinery.
#[derive(Debug, Error)]
pub enum BicError {
    #[error("invalid nome q = {0}: the theta series requires 0 <= q < 1")]
    InvalidNome(f64),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("eigensolver failed to converge for a {size}x{size} matrix")]
    EigenNonConvergence { size: usize },

    #[error("energy {energy} lies within {distance:e} of reaction-region eigenvalue {lambda}")]
    PoleProximity {
        energy: f64,
        lambda: f64,
        distance: f64,
    },

    #[error("1 + iK is singular (condition estimate {condition:e}) at E = {energy}")]
    SingularMatrix { energy: f64, condition: f64 },

    #[error("energy {energy} is outside the bound-state domain: mode nu=0 propagates above {threshold}")]
    OutsideEvanescentDomain { energy: f64, threshold: f64 },

    #[error("state tracking failed at L = {half_width}: best overlap {overlap:.3}")]
    TrackingFailure { half_width: f64, overlap: f64 },

    #[error("argument-principle count mismatch in region {region}: winding {winding}, refined {found}")]
    PoleCountMismatch {
        region: String,
        winding: i64,
        found: usize,
    },

    #[error("pole tracking lost at beta = {beta}")]
    PoleTrackingLost { beta: f64 },

    #[error("finite-difference grid with {points} points exceeds the {limit} point limit")]
    GridTooLarge { points: usize, limit: usize },

    #[error("{0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, BicError>;
