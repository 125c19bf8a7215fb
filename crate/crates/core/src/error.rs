use std::path::PathBuf;

use thiserror::Error;

use crate::embeddings::EmbedError;
use crate::numkit::NumError;
use crate::scenegraph::GraphError;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Num(#[from] NumError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error("image error: {0}")]
    Image(String),
    #[error("input error: {0}")]
    Input(String),
    #[error("structural error: {0}")]
    Structure(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("evaluation error: {0}")]
    Evaluation(String),
    #[error("dataset has {} invalid record(s):\n  {}", .0.len(), .0.join("\n  "))]
    Dataset(Vec<String>),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("JSON error: {0}")]
    Json(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Problems with what the caller asked for, as opposed to failures
    /// while carrying it out.
    pub fn is_usage(&self) -> bool {
        matches!(self, Error::Config(_) | Error::Json(_))
            || matches!(self, Error::Num(NumError::Config(_)))
            || matches!(self, Error::Graph(GraphError::Config(_)))
            || matches!(self, Error::Embed(EmbedError::Config(_)))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
