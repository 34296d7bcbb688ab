use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Failure modes shared by every layer of the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter out of domain: {0}")]
    ParameterDomain(String),

    #[error("invalid configuration: {0}")]
    Configuration(String),

    #[error("periodic orbit not found: {0}")]
    OrbitNotFound(String),

    #[error("degenerate periodic orbit: {0}")]
    DegenerateOrbit(String),

    #[error("island boundary ill-defined: {failed} of {total} angles failed to bracket")]
    IllDefinedBoundary { failed: usize, total: usize },

    #[error("wave packet is not localized in the cell: width {width} >= {limit}")]
    IllLocalized { width: f64, limit: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("island tagging failed: best tags {best:?}")]
    TaggingFailure { best: Vec<f64> },

    #[error("tunneling period undefined when splitting and asymmetry both vanish")]
    UndefinedPeriod,

    #[error("least-squares fit failed (best residual {best_residual:e}): {reason}")]
    FitFailure { reason: String, best_residual: f64 },

    #[error("insufficient data: need at least {needed}, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("initialization failed: {0}")]
    Initialization(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by bad inputs rather than by numerics.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::ParameterDomain(_)
                | Error::Configuration(_)
                | Error::IllLocalized { .. }
                | Error::InsufficientData { .. }
                | Error::Json(_)
        )
    }
}
