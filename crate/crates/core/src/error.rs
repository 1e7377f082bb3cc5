use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in `{op}`: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("unsupported primitive `{0}`")]
    UnsupportedPrimitive(String),

    #[error("non-finite value produced by `{0}`")]
    NonFinite(&'static str),

    #[error("non-finite gradient while back-propagating through `{0}`")]
    NonFiniteGradient(&'static str),

    #[error("loss must be a scalar, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),

    #[error("variable was recorded on a different tape")]
    ForeignVar,

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("numerical divergence: {0}")]
    Divergence(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape { op, detail: detail.into() }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    /// True for failures caused by NaN/Inf blow-ups rather than bad input.
    pub fn is_divergence(&self) -> bool {
        matches!(
            self,
            Error::Divergence(_) | Error::NonFinite(_) | Error::NonFiniteGradient(_)
        )
    }
}
