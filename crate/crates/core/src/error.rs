use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("missing dataset file {0}")]
    MissingFile(PathBuf),

    /// A malformed line in one of the dataset files. `line` is 1-based.
    #[error("{file}:{line}: {message}")]
    Parse {
        file: String,
        line: usize,
        message: String,
    },

    #[error("{file}: expected {expected} rows, found {found}")]
    RowCount {
        file: String,
        expected: usize,
        found: usize,
    },

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("class {0} has no nodes")]
    EmptyClass(usize),

    #[error("averaged covariance is singular")]
    SingularCovariance,

    #[error("node {0} has no out-neighbors")]
    ZeroDegree(usize),

    #[error("graph is not undirected: edge {0}->{1} has no reverse")]
    NotUndirected(usize, usize),

    #[error("graph has no non-isolated nodes")]
    NoEdges,

    #[error("graph has no {0} split")]
    MissingSplit(&'static str),

    #[error("root finding failed on [{lo}, {hi}]: {reason}")]
    RootFinding { lo: f64, hi: f64, reason: String },

    #[error("rejection sampler acceptance rate {0:e} is below 1e-4")]
    DegenerateSampler(f64),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(file: &str, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            file: file.to_string(),
            line,
            message: message.into(),
        }
    }

    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// True when the error stems from bad input (files, parameters, graph
    /// shape) rather than a failure while computing.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::Io { .. } | Error::RootFinding { .. } | Error::DegenerateSampler(_) => false,
            Error::Context { source, .. } => source.is_validation(),
            _ => true,
        }
    }
}
