use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("period {period}: {source}")]
    AtPeriod {
        period: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn at_period(self, period: usize) -> Self {
        Error::AtPeriod { period, source: Box::new(self) }
    }

    /// Innermost error, skipping period wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtPeriod { source, .. } => source.root(),
            other => other,
        }
    }

    /// Process exit code: 1 config, 2 infeasible, 3 numerical tolerance.
    pub fn exit_code(&self) -> i32 {
        match self.root() {
            Error::Infeasible(_) => 2,
            Error::Numerical(_) => 3,
            _ => 1,
        }
    }
}
