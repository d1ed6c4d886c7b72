use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("model provider unavailable: {0}")]
    ProviderUnavailable(String),

    #[error("malformed distribution: {0}")]
    MalformedDistribution(String),

    #[error("invalid context: {0}")]
    InvalidContext(String),

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("validation error in {subject}: {message}")]
    Validation { subject: String, message: String },

    #[error("malformed verdict: {0:?}")]
    MalformedVerdict(String),

    #[error("unknown label(s) in records: {}", .ids.join(", "))]
    UnknownLabel { ids: Vec<String> },

    #[error("exploration budget exceeded: more than {cap} nodes expanded")]
    BudgetExceeded { cap: usize },

    #[error("state explosion: more than {cap} paths enumerated; shrink the horizon or raise the floor")]
    StateExplosion { cap: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("degenerate label: truths are all {}", if *.all_positive { "positive" } else { "negative" })]
    DegenerateLabel { all_positive: bool },

    #[error("every label is degenerate; macro AUC undefined")]
    AllLabelsDegenerate,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn parse(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            location: location.into(),
            message: message.into(),
        }
    }

    pub(crate) fn validation(subject: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            subject: subject.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command-line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::ProviderUnavailable(_) | Error::MalformedDistribution(_) => 2,
            Error::BudgetExceeded { .. } | Error::StateExplosion { .. } => 3,
            _ => 1,
        }
    }
}
