use thiserror::Error;

use crate::model::IndexTuple;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A field failed validation; `field` is a dotted path such as `device.omega`.
    #[error("invalid value for `{field}`: {reason}")]
    Invalid { field: String, reason: String },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("data grid incomplete: {0}")]
    GridIncomplete(String),

    #[error("kernel returned a non-finite value at lambda = {lambda:e}")]
    NonFiniteKernel { lambda: f64 },

    #[error("non-finite kernel value at lambda = {lambda:e} for (rho #{t}, height #{i}, frequency #{j})")]
    NonFiniteReading { lambda: f64, t: usize, i: usize, j: usize },

    #[error("singular configuration: N0 + Y1 vanishes at lambda = {lambda:e}")]
    SingularConfiguration { lambda: f64 },

    #[error("model evaluation failed at perturbed column {column}: {source}")]
    PerturbedColumn {
        column: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("regularization matrix incompatible with the Jacobian: null spaces intersect")]
    NullSpaceIntersection,

    #[error("truncation index {ell} out of range 1..={max}")]
    TruncationOutOfRange { ell: usize, max: usize },

    #[error("generalized value c = {value:e} below rank tolerance in retained block")]
    DegenerateGeneralizedValue { value: f64 },

    #[error("forward model failed at iteration {iteration}: {source}")]
    Iteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("every truncation index stagnated")]
    AllStagnated,

    #[error("run cancelled")]
    Cancelled,
}

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Invalid {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// Dotted field path for validation failures.
    pub fn field(&self) -> Option<&str> {
        match self {
            Error::Invalid { field, .. } => Some(field),
            _ => None,
        }
    }

    pub(crate) fn missing_tuple(tuple: IndexTuple) -> Self {
        Error::GridIncomplete(format!("missing reading for {tuple}"))
    }
}
