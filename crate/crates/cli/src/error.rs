//! Failure classes and their exit codes.

use longvine::Error;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("convergence failure: {0}")]
    Convergence(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Convergence(_) => 4,
            CliError::Runtime(_) => 1,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let m = e.to_string();
        match e {
            Error::Config { .. } | Error::UnknownFamily(_) => CliError::Config(m),
            Error::Data(_) | Error::Empty(_) | Error::Scale(_) | Error::LengthMismatch(..) => {
                CliError::Data(m)
            }
            Error::TooManyFailures { .. } | Error::NanObjective(_) | Error::RankDeficient(_) => {
                CliError::Convergence(m)
            }
            _ => CliError::Runtime(m),
        }
    }
}
