use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// An input violated an operation's preconditions (non-unit vector, bad index, ...).
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("configuration error: {0}")]
    Config(String),
    /// Geometry that admits no unique answer (coincident points, parallel rays, ...).
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("unsupported media: {0}")]
    UnsupportedMedia(String),
    #[error("no signal in intensity profile")]
    NoSignal,
    #[error("fit error: {0}")]
    Fit(String),
    #[error("malformed {what}: {detail}")]
    Format { what: &'static str, detail: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn format(what: &'static str, detail: impl Into<String>) -> Self {
        Error::Format { what, detail: detail.into() }
    }
}
