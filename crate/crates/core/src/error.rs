use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration or argument violated a documented constraint.
    #[error("invalid {field}: {reason}")]
    Validation { field: &'static str, reason: String },

    /// The delay network cannot undo beam split for every direction
    /// (max over m of |P (xi_m - 1)| must stay below one).
    #[error("delay-phase structure infeasible: max |P (xi_m - 1)| = {max_split:.6} >= 1")]
    DppInfeasible { max_split: f64 },

    /// A beam-zoom design needs a TD phase outside [-1, 1] (1-based subcarrier).
    #[error("zoom infeasible at subcarrier {m}: TD phase beta = {beta:.6} outside [-1, 1]")]
    ZoomInfeasible { m: usize, beta: f64 },

    #[error("trajectory of user {user} leaves [-1, 1] at frame {frame} (theta = {theta:.6})")]
    TrajectoryOutOfRange { user: usize, frame: usize, theta: f64 },

    #[error("precoding failed: {0}")]
    Precoding(String),

    #[error("scenario {context}: {reason}")]
    Scenario { context: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn validation(field: &'static str, reason: impl Into<String>) -> Self {
        Error::Validation {
            field,
            reason: reason.into(),
        }
    }

    /// True for errors caused by bad input rather than a runtime failure.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Validation { .. } | Error::Scenario { .. } | Error::DppInfeasible { .. }
        )
    }
}
