use ncupper::hierarchy::{ErrorClass, HierarchyError};
use ncupper::states::StateError;
use ncupper::{AlgebraError, HaarError};

/// Failure of a CLI operation, classified by exit status.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Budget(String),
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn input(message: impl Into<String>) -> Self {
        CliError::Input(message.into())
    }

    /// 2 for input errors, 3 for exhausted budgets, 4 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Budget(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }
}

impl From<HierarchyError> for CliError {
    fn from(err: HierarchyError) -> Self {
        let message = err.to_string();
        match err.class() {
            ErrorClass::Input => CliError::Input(message),
            ErrorClass::Budget => CliError::Budget(message),
            ErrorClass::Numerical => CliError::Numerical(message),
        }
    }
}

impl From<StateError> for CliError {
    fn from(err: StateError) -> Self {
        HierarchyError::from(err).into()
    }
}

impl From<HaarError> for CliError {
    fn from(err: HaarError) -> Self {
        StateError::from(err).into()
    }
}

impl From<AlgebraError> for CliError {
    fn from(err: AlgebraError) -> Self {
        CliError::Input(err.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(err: std::io::Error) -> Self {
        CliError::Input(err.to_string())
    }
}
