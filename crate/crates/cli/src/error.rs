use teleqa_core::ErrorClass;
use teleqa_study::StudyError;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] teleqa_core::Error),
    #[error(transparent)]
    Study(#[from] StudyError),
    #[error("configuration: {0}")]
    Config(String),
    #[error("{failed} of {total} {what} failed; first failure: {first}")]
    Partial {
        what: &'static str,
        failed: usize,
        total: usize,
        first: String,
        class: ErrorClass,
    },
}

/// Exit status for an error class: config 2, data 3, convergence 4,
/// external tool 5.
pub fn exit_code(class: ErrorClass) -> i32 {
    match class {
        ErrorClass::Config => 2,
        ErrorClass::Data => 3,
        ErrorClass::Convergence => 4,
        ErrorClass::ExternalTool => 5,
    }
}

impl CliError {
    pub fn class(&self) -> ErrorClass {
        match self {
            CliError::Core(e) => e.class(),
            CliError::Study(StudyError::Config(_) | StudyError::ManifestTooSmall { .. }) => {
                ErrorClass::Config
            }
            CliError::Study(_) => ErrorClass::Data,
            CliError::Config(_) => ErrorClass::Config,
            CliError::Partial { class, .. } => *class,
        }
    }

    pub fn exit_code(&self) -> i32 {
        exit_code(self.class())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(teleqa_core::Error::io("<io>", e))
    }
}
