//! Batch driver for the sampling, embedding, tabulation, reduced simulation
//! and comparison stages.

pub mod config;
pub mod pipeline;

pub use config::PipelineConfig;

/// Failure of one pipeline invocation, carrying its exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage error: {0}")]
    Usage(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{context}: {source}")]
    Io { context: String, source: std::io::Error },
    #[error("provenance mismatch: {0} (pass --force to compare anyway)")]
    Provenance(String),
    #[error(transparent)]
    Core(#[from] slowman::Error),
}

impl CliError {
    /// 1 for numerical failures, 2 for usage and configuration errors.
    pub fn exit_code(&self) -> i32 {
        use slowman::Error as E;
        match self {
            CliError::Core(e) => match e {
                E::InvalidParameter(_)
                | E::DimensionMismatch(_)
                | E::MechanismSyntax { .. }
                | E::InvalidMechanism(_)
                | E::ElementImbalance { .. }
                | E::UnknownSpecies { .. }
                | E::Unknown { .. }
                | E::Unsupported(_)
                | E::Io(_)
                | E::Csv(_)
                | E::Json(_)
                | E::Format(_) => 2,
                _ => 1,
            },
            _ => 2,
        }
    }
}
