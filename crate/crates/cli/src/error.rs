use thiserror::Error;

/// Process exit codes.
pub mod exit {
    pub const SUCCESS: i32 = 0;
    pub const IO: i32 = 1;
    pub const CONFIG: i32 = 2;
    pub const CONVERGENCE: i32 = 3;
    pub const NOT_CONTROLLABLE: i32 = 4;
    pub const INTERNAL_CONSISTENCY: i32 = 5;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("missing artifact: {0}")]
    MissingArtifact(String),

    #[error(transparent)]
    Core(#[from] viscoctl::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use viscoctl::Error as E;
        match self {
            CliError::Config(_) => exit::CONFIG,
            CliError::Core(e) => match e {
                E::InvalidDomain(_) | E::Precondition(_) | E::Shape(_) | E::KernelDerivative(_) => {
                    exit::CONFIG
                }
                E::Convergence { .. } | E::StepSize { .. } => exit::CONVERGENCE,
                E::NotControllable { .. } | E::NearDegenerate { .. } => exit::NOT_CONTROLLABLE,
                E::InternalConsistency { .. } | E::QuadratureInconsistency(_) => {
                    exit::INTERNAL_CONSISTENCY
                }
                E::Io(_) | E::Csv(_) | E::Json(_) => exit::IO,
            },
            CliError::MissingArtifact(_)
            | CliError::Io(_)
            | CliError::Json(_)
            | CliError::Csv(_) => exit::IO,
        }
    }
}
