use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not a rotation (orthogonality residual {orthogonality:.3e}, det {determinant})")]
    NotARotation { orthogonality: f64, determinant: f64 },

    #[error("segment durations must be positive, got {0}")]
    NonPositiveDuration(f64),

    #[error("{segments} segments need {} waypoints, got {waypoints}", segments - 1)]
    WaypointCountMismatch { segments: usize, waypoints: usize },

    #[error("degenerate thrust direction: |a + g| = {0:.3e}")]
    DegenerateThrust(f64),

    #[error("solver produced non-finite values")]
    NonFinite,

    #[error("invalid config: {key}: {reason}")]
    InvalidConfig { key: String, reason: String },

    #[error("config parse error: {0}")]
    ConfigParse(#[from] toml::de::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidConfig { key: key.into(), reason: reason.into() }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
