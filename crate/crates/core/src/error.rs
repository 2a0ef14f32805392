use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("world generation failed after {attempts} attempts: {reason}")]
    GenerationFailure { attempts: u32, reason: String },

    #[error("point ({x:.3}, {y:.3}) is blocked or out of bounds")]
    InvalidPoint { x: f64, y: f64 },

    #[error("goal is unreachable from start")]
    UnreachableGoal,

    #[error("unknown landmark id {0}")]
    UnknownLandmark(u32),

    #[error("waypoint list is empty")]
    EmptyWaypoints,

    #[error("episode sampling failed after {0} attempts")]
    SamplingFailure(u32),

    #[error("stitch gap {gap:.3} m exceeds maximum {max_gap:.3} m")]
    GapTooLarge { gap: f64, max_gap: f64 },

    #[error("episodes belong to different worlds ({0} vs {1})")]
    DifferentWorld(u64, u64),

    #[error("zero-length vector")]
    ZeroVector,

    #[error("timestamp {got} is not greater than last timestamp {last}")]
    NonMonotonicTimestamp { got: u64, last: u64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("empty batch")]
    EmptyBatch,

    #[error("empty dataset")]
    EmptyDataset,

    #[error("empty results")]
    EmptyResults,

    #[error("empty path")]
    EmptyPath,

    #[error("state ({x:.3}, {y:.3}) lies inside an obstacle")]
    StateInObstacle { x: f64, y: f64 },

    #[error("expert path is unreachable from the current state")]
    UnreachableExpertPath,

    #[error("schema mismatch: expected {expected}, found {found}")]
    SchemaMismatch { expected: String, found: String },

    #[error("insufficient episodes: {0}")]
    InsufficientEpisodes(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("fingerprint mismatch in {path}: file has {found}, config has {expected} (use force to overwrite)")]
    FingerprintMismatch {
        path: PathBuf,
        expected: String,
        found: String,
    },

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Tag the error with a pipeline stage unless it already carries one.
    pub fn in_stage(self, stage: &'static str) -> Self {
        match self {
            e @ Error::Stage { .. } => e,
            e => Error::Stage {
                stage,
                source: Box::new(e),
            },
        }
    }

    /// Name of the pipeline stage that failed, if this error came from one.
    pub fn stage(&self) -> Option<&'static str> {
        match self {
            Error::Stage { stage, .. } => Some(stage),
            _ => None,
        }
    }
}
