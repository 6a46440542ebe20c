use std::path::PathBuf;

/// Failures surfaced by the command-line front end, each with a fixed exit
/// code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("corrupt checkpoint {path}: {reason}")]
    Corrupt { path: PathBuf, reason: String },
    #[error("run aborted: {0}")]
    NonFinite(String),
    #[error("{0} check(s) failed")]
    CheckFailed(usize),
    #[error("output directory {0} is locked by another run")]
    Locked(PathBuf),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(pairvmc_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::CheckFailed(_) | CliError::Io { .. } => 1,
            CliError::NonFinite(_) => 3,
            CliError::Core(e) if is_non_finite(e) => 3,
            _ => 2,
        }
    }

    pub fn io(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> CliError {
        let context = context.into();
        move |source| CliError::Io { context, source }
    }
}

fn is_non_finite(e: &pairvmc_core::Error) -> bool {
    use pairvmc_core::Error::*;
    matches!(e, NonFinite(_) | NonFiniteEnergy { .. } | NodeEvaluation)
}

impl From<pairvmc_core::Error> for CliError {
    fn from(e: pairvmc_core::Error) -> Self {
        match e {
            pairvmc_core::Error::Shape(s) => CliError::Shape(s),
            pairvmc_core::Error::InvalidConfig(s) | pairvmc_core::Error::InvalidSystem(s) => {
                CliError::Config(s)
            }
            e if is_non_finite(&e) => CliError::NonFinite(e.to_string()),
            e => CliError::Core(e),
        }
    }
}
