use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{file}:{line}: {message}")]
    Parse {
        file: String,
        line: usize,
        message: String,
    },

    #[error("duplicate id `{id}` at {file}:{line}")]
    DuplicateId {
        file: String,
        line: usize,
        id: String,
    },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("unknown id `{0}`")]
    UnknownId(String),

    #[error("scorer protocol error: {0}")]
    Protocol(String),

    #[error("missing artifact for stage `{stage}`: {detail} (run stage `{requires}` first)")]
    MissingArtifact {
        stage: String,
        requires: String,
        detail: String,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(file: impl Into<String>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            file: file.into(),
            line,
            message: message.into(),
        }
    }

    /// True for failures of the external scorer wire protocol.
    pub fn is_protocol(&self) -> bool {
        matches!(self, Error::Protocol(_))
    }
}
