use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("unknown plot kind {0:?} (expected one of msd, return-scaling, triadic, ks)")]
    UnknownPlot(String),

    #[error("manifest has no output {0:?}; run the matching experiment first")]
    MissingOutput(String),

    #[error("{} check(s) failed: {}", .0.len(), .0.join(", "))]
    CheckFailed(Vec<String>),

    #[error(transparent)]
    Core(#[from] erwlab_core::error::Error),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("worker pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use erwlab_core::error::Error as E;
        match self {
            CliError::Config(_) | CliError::UnknownPlot(_) => 2,
            CliError::Core(
                E::InvalidAlpha(_)
                | E::InvalidMemoryParam(_)
                | E::OutOfRange { .. }
                | E::DegenerateGrid(_),
            ) => 2,
            CliError::CheckFailed(_) => 3,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
