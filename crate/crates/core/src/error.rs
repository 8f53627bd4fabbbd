use thiserror::Error;

use crate::pose_estimation::ValidationReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("point is behind the camera (z = {depth})")]
    BehindCamera { depth: f64 },

    #[error("measurement {measurement}: axis test point is behind the camera")]
    MeasurementBehindCamera { measurement: usize },

    #[error("all points coincide; no line is defined")]
    CoincidentPoints,

    #[error("line is vertical; slope-intercept form does not exist")]
    VerticalLine,

    #[error("too few points: need {needed}, got {got}")]
    TooFewPoints { needed: usize, got: usize },

    #[error("degenerate point scatter: {0}")]
    DegenerateScatter(String),

    #[error("conic is not an ellipse")]
    NotAnEllipse,

    #[error("conic gradient vanishes at the query point")]
    VanishingGradient,

    #[error("joint angle count {got} does not match chain length {expected}")]
    AngleCountMismatch { expected: usize, got: usize },

    #[error("at least two distinct axis test values are required")]
    TooFewTestPoints,

    #[error("kinematic chain has no links")]
    EmptyChain,

    #[error("residual is not finite at the starting point")]
    NonFiniteResidual,

    #[error("non-analytic operation in complex-step evaluation (column {column})")]
    NonAnalytic { column: usize },

    #[error("Jacobian is rank deficient (condition number of JᵀJ ≈ {condition:.3e})")]
    RankDeficient { condition: f64 },

    #[error("every restart failed: {0}")]
    AllRestartsFailed(String),

    #[error("optimization did not converge (best residual norm {best_residual:.6e})")]
    NotConverged { best_residual: f64 },

    #[error("degenerate measurement configuration: {}", .0.reasons.join("; "))]
    Degenerate(ValidationReport),

    #[error("arm pose {arm_pose}: feature leaves the camera frustum")]
    OutOfFrustum { arm_pose: usize },

    #[error("{failed} of {total} Monte Carlo trials failed")]
    TooManyFailures { failed: usize, total: usize },

    #[error("{path}: parse error at byte {offset} (line {line}, column {column}): {message}")]
    Parse {
        path: String,
        offset: usize,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
