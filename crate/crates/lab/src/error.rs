use std::path::PathBuf;

use horocycle_core::Error as CoreError;

#[derive(Debug, thiserror::Error)]
pub enum LabError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("{0}")]
    Output(String),
}

impl LabError {
    /// Process exit status: 2 for numeric failures, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            LabError::Numeric(_) => 2,
            _ => 1,
        }
    }
}

impl From<CoreError> for LabError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::NonFinite(_) | CoreError::NotConverged(_) | CoreError::ReductionStalled(_) => {
                LabError::Numeric(e.to_string())
            }
            _ => LabError::Config(e.to_string()),
        }
    }
}
