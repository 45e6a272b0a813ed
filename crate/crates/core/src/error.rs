use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error in {file}, row {row}: {msg}")]
    Parse {
        file: String,
        row: usize,
        msg: String,
    },
    #[error("validation error: {0}")]
    Validation(String),
    #[error("transform error: {0}")]
    Transform(String),
    #[error("model error: {0}")]
    Model(String),
    #[error("sampler error: {0}")]
    Sampler(String),
    #[error("diagnostics error: {0}")]
    Diagnostics(String),
    #[error("prediction error: {0}")]
    Prediction(String),
    #[error("simulation error: {0}")]
    Simulation(String),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
