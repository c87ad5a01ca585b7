use thiserror::Error;

/// Errors shared by every module of the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum GkError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("rank deficient: rank {rank} of {expected} vectors at tolerance {tolerance:e}")]
    RankDeficient {
        rank: usize,
        expected: usize,
        tolerance: f64,
    },

    #[error("out of chart: {0}")]
    OutOfChart(String),

    #[error("invalid scale {0}: expected 0 < delta <= 1")]
    InvalidScale(f64),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("invalid exponent p = {p}: expected 1 <= p <= {max}")]
    InvalidExponent { p: f64, max: f64 },

    #[error("spacing precondition violated: ball at member {center} of radius {radius} holds {count} points (allowed {allowed})")]
    SpacingViolation {
        center: usize,
        radius: f64,
        count: usize,
        allowed: f64,
    },

    #[error("resource cap exceeded: {0}")]
    ResourceCap(String),

    #[error("io error: {0}")]
    Io(String),

    #[error("json error: {0}")]
    Json(String),
}

pub type Result<T> = std::result::Result<T, GkError>;

impl From<std::io::Error> for GkError {
    fn from(e: std::io::Error) -> Self {
        GkError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for GkError {
    fn from(e: serde_json::Error) -> Self {
        GkError::Json(e.to_string())
    }
}

impl GkError {
    /// Stable kebab-case name used in machine-readable error records.
    pub fn kind(&self) -> &'static str {
        match self {
            GkError::InvalidInput(_) => "invalid-input",
            GkError::RankDeficient { .. } => "rank-deficient",
            GkError::OutOfChart(_) => "out-of-chart",
            GkError::InvalidScale(_) => "invalid-scale",
            GkError::InvalidParams(_) => "invalid-params",
            GkError::InvalidExponent { .. } => "invalid-exponent",
            GkError::SpacingViolation { .. } => "spacing-violation",
            GkError::ResourceCap(_) => "resource-cap",
            GkError::Io(_) => "io",
            GkError::Json(_) => "json",
        }
    }

    /// Process exit code: 3 for resource caps, 2 for everything a config
    /// can cause, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            GkError::ResourceCap(_) => 3,
            GkError::InvalidInput(_)
            | GkError::InvalidScale(_)
            | GkError::InvalidParams(_)
            | GkError::InvalidExponent { .. }
            | GkError::Json(_) => 2,
            _ => 1,
        }
    }
}
