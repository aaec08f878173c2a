use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("degenerate weights: {0}")]
    DegenerateWeights(String),

    /// Every state particle of a bootstrap filter received zero weight.
    #[error("particle collapse at t={t}: {detail}")]
    ParticleCollapse { t: usize, detail: String },

    /// Every parameter particle of the outer sampler received zero weight.
    #[error("degenerate parameter population at t={t}: {detail}")]
    DegeneratePopulation { t: usize, detail: String },

    #[error("singular proposal covariance ({0}); increase the number of parameter particles")]
    SingularProposal(String),

    #[error("config: {0}")]
    Config(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("I/O error at {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
