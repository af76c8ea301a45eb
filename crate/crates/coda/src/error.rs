use thiserror::Error;

pub type Result<T> = std::result::Result<T, CodaError>;

#[derive(Debug, Error)]
pub enum CodaError {
    #[error("invalid distribution spec: {0}")]
    InvalidDist(String),

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl CodaError {
    /// CLI exit code: 2 usage, 3 data, 4 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            CodaError::InvalidDist(_) | CodaError::InvalidParam(_) => 2,
            CodaError::Data(_) | CodaError::Dimension(_) | CodaError::Io(_) => 3,
            CodaError::Numerical(_) => 4,
        }
    }
}
