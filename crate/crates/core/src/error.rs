use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid blueprint: {0}")]
    Blueprint(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("no fertile air/earth interface in column {column}")]
    SeedPlacementFailed { column: usize },
    #[error("malformed snapshot: {0}")]
    Snapshot(String),
    #[error("malformed params file: {0}")]
    Params(String),
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
    #[error("parameter vector has length {got}, architecture expects {expected}")]
    ParamsLength { expected: usize, got: usize },
    #[error("candidate index {index} out of range (have {len})")]
    CandidateIndex { index: usize, len: usize },
    #[error("session is closed")]
    SessionClosed,
    #[error("replay diverged at step {step}")]
    ReplayDiverged { step: u64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
