use std::path::PathBuf;

/// Errors raised anywhere in the lab.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An input violated an operation's precondition (bad distribution, action out of range).
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// A configuration value is out of its valid domain.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// An operation was invoked in a state that does not allow it.
    #[error("usage error: {0}")]
    Usage(String),

    /// A loss or gradient became non-finite.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// Shapes of two parameter sets or matrices disagree.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Data needed by a metric or report is missing.
    #[error("incomplete data: {0}")]
    IncompleteData(String),

    /// A query outside a function's domain, e.g. a robustness threshold >= 1.
    #[error("domain error: {0}")]
    Domain(String),

    /// Least-squares fit with a degenerate design.
    #[error("rank deficient fit: {0}")]
    Rank(String),

    #[error("duplicate record: {0}")]
    Duplicate(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed json in {context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(context: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Json {
            context: context.into(),
            source,
        }
    }
}
