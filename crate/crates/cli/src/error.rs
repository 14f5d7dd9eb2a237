use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Unreadable or invalid configuration.
    #[error("config error: {0}")]
    Config(String),

    /// Stages run out of order, stale or missing inputs, or a held lock.
    #[error("pipeline error: {0}")]
    Pipeline(String),

    /// Training finished but did not meet its quality gate.
    #[error("training failure: {0}")]
    Gate(String),

    #[error(transparent)]
    Core(#[from] airl_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use airl_core::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Pipeline(_) => 3,
            CliError::Gate(_) => 4,
            CliError::Core(e) => match e {
                E::Training { .. } | E::Divergence { .. } | E::Numeric(_) => 4,
                E::Dimension { .. } | E::Contract(_) | E::Data(_) | E::Io { .. } | E::Json { .. } => 1,
            },
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
