use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("operation not supported for {0} manifolds")]
    UnsupportedModel(&'static str),

    #[error("band {omega} exceeds the basis completeness threshold {lambda_max}")]
    OutOfBand { omega: f64, lambda_max: f64 },

    #[error("not a sampling set: sigma_min = {sigma_min:e}, {points} points for a band of dimension {required}")]
    NotASamplingSet {
        sigma_min: f64,
        points: usize,
        required: usize,
    },

    #[error("truncation unsafe: {0}")]
    TruncationUnsafe(String),

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("gamma search failed: {0}")]
    SearchFailure(String),

    #[error("gaussian bound fit failed: {0}")]
    FitFailure(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// True for failures of a numerical procedure, as opposed to rejected input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NumericalFailure(_)
                | Error::SearchFailure(_)
                | Error::FitFailure(_)
                | Error::TruncationUnsafe(_)
                | Error::NotASamplingSet { .. }
        )
    }
}
