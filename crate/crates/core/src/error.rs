use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller broke a documented precondition (shapes, canonical labels, ranges).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("numerical error at step {step}: {detail}")]
    Numerical { step: usize, detail: String },

    #[error("training diverged at iteration {iteration}: {detail}")]
    Divergence { iteration: usize, detail: String },

    #[error("enumeration guard: {what} with n={n} exceeds the limit of {limit}")]
    Guard {
        what: &'static str,
        n: usize,
        limit: usize,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn contract(msg: impl Into<String>) -> Error {
    Error::Contract(msg.into())
}
