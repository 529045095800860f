use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{what} = {value} is outside its domain")]
    OutOfDomain { what: &'static str, value: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("series truncation failed after {terms} terms (tail bound {bound:e})")]
    TruncationFailure { terms: usize, bound: f64 },

    #[error("invalid Gamma moment at order {order}: {value}")]
    InvalidMoments { order: usize, value: f64 },

    #[error("matrix is not positive semidefinite (smallest eigenvalue {})", fmt_eig(.min_eigenvalue))]
    NotPsd { min_eigenvalue: Option<f64> },

    #[error("dimension {m} exceeds the dense cap {cap}")]
    DenseCapExceeded { m: usize, cap: usize },

    #[error("replication {index}: {source}")]
    Replication {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("Gaussian FDP approximation invalid: variance argument {radicand:e} is not positive")]
    ApproximationInvalid { radicand: f64 },

    #[error("no sign change for the BH fixed point on the bracket")]
    NoRoot,

    #[error("{0}")]
    Undefined(String),

    #[error("schema version mismatch: expected {expected:?}, found {found:?}")]
    Schema { expected: String, found: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn fmt_eig(v: &Option<f64>) -> String {
    match v {
        Some(v) => format!("{v:e}"),
        None => "not computed".to_string(),
    }
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    /// True for errors caused by the caller's configuration rather than by
    /// the computation itself.
    pub fn is_config_error(&self) -> bool {
        match self {
            Error::OutOfDomain { .. }
            | Error::InvalidParameter(_)
            | Error::DenseCapExceeded { .. }
            | Error::Schema { .. }
            | Error::Json(_) => true,
            Error::Replication { source, .. } => source.is_config_error(),
            _ => false,
        }
    }
}
