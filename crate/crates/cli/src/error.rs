use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {field}: {reason}")]
    ConfigInvalid { field: String, reason: String },
    #[error("stage {stage} needs {upstream}, which has not been run")]
    MissingUpstreamArtifact { stage: String, upstream: String },
    #[error("stage {stage} failed: {cause}")]
    StageFailed { stage: String, cause: String },
    #[error("convergence diagnostics failed for {0}")]
    DiagnosticsFailed(String),
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
}

impl PipelineError {
    pub fn config(field: &str, reason: impl Into<String>) -> Self {
        Self::ConfigInvalid { field: field.to_string(), reason: reason.into() }
    }

    pub fn failed(stage: &str, cause: impl std::fmt::Display) -> Self {
        Self::StageFailed { stage: stage.to_string(), cause: cause.to_string() }
    }

    /// Process exit code for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Io(_) => 1,
            Self::ConfigInvalid { .. } => 3,
            Self::MissingUpstreamArtifact { .. } => 4,
            Self::StageFailed { .. } => 5,
            Self::DiagnosticsFailed(_) => 6,
        }
    }
}
