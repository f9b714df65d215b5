use thiserror::Error;

/// Errors raised by the numerical pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("no equivalent ellipse: {0}")]
    NoEquivalentEllipse(String),

    /// The contrast sits on (or numerically next to) an eigenvalue of the boundary operator.
    #[error("contrast {lambda} is within {distance:.3e} of the eigenvalue {nearest}")]
    ResonanceProximity { lambda: f64, nearest: f64, distance: f64 },

    #[error("map singularity: point at distance {distance:.3e} from the pole")]
    MapSingularity { distance: f64 },

    #[error("pole: contrast {lambda} coincides with resonance {eigenvalue}")]
    Pole { lambda: f64, eigenvalue: f64 },

    #[error("order mismatch: need order {needed}, table has {found}")]
    OrderMismatch { needed: usize, found: usize },

    #[error("found {found} peaks, need {needed}")]
    InsufficientPeaks { found: usize, needed: usize },

    #[error("usage error: {0}")]
    Usage(String),

    #[error("shape descent stalled after {0} consecutive rejected steps")]
    Stall(usize),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;
