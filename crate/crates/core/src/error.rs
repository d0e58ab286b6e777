use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{op} is not defined for {kind} measures")]
    UnsupportedMeasure {
        op: &'static str,
        kind: &'static str,
    },

    #[error("{what} did not converge{}", at.map(|x| format!(" at x = {x}")).unwrap_or_default())]
    NonConvergence { what: String, at: Option<f64> },

    #[error("integral diverges: {0}")]
    Divergence(String),

    #[error("size mismatch: {0} vs {1}")]
    SizeMismatch(usize, usize),

    #[error("singular design: {0}")]
    SingularDesign(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("no grid point satisfies the feasibility constraint")]
    EmptyFeasibleSet,

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("malformed input: {0}")]
    Format(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn no_convergence(what: impl Into<String>, at: Option<f64>) -> Self {
        Error::NonConvergence {
            what: what.into(),
            at,
        }
    }

    /// True for failures of an iterative numerical method, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::NonConvergence { .. } | Error::Divergence(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
