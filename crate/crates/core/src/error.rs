use thiserror::Error;

use crate::solvers::IterTrace;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected:?}, got {got:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },

    #[error("invalid problem dimensions: {0}")]
    InvalidDims(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("non-finite entry in input matrix")]
    NonFinite,

    #[error("Gram matrix A A^T is singular or ill-conditioned (constraint matrix rank deficient)")]
    SingularGram,

    #[error("binary row {row} satisfies 2R_i = e1 exactly; projection is multivalued")]
    DegenerateRow { row: usize },

    #[error("binary row {row} has a vanishing constraint normal; linearization undefined")]
    ZeroNormal { row: usize },

    #[error("Schur complement system is singular (constraint normals lost independence)")]
    SingularSchur,

    #[error("tangent-space KKT system is singular")]
    SingularKkt,

    #[error("weighted Gram matrix of the dual projection problem is singular")]
    SingularWeightedGram,

    #[error("Newton system of the dual projection problem is singular")]
    SingularNewton,

    #[error("relaxed tangent direction vanishes (point already on the row-sphere set)")]
    VanishingDirection,

    #[error("initial residual {err0:.3e} exceeds the admissible bound {bound:.3e}")]
    InitialResidualTooLarge { err0: f64, bound: f64 },

    #[error("no convergence after {iters} iterations (last residual {residual:.3e})")]
    MaxIterExceeded {
        iters: usize,
        residual: f64,
        trace: Option<Box<IterTrace>>,
    },

    #[error("step failed at iteration {iter}: {source}")]
    StepFailed {
        iter: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("input is not an orthogonal projector: {0}")]
    NonProjector(String),

    #[error("input vector norm is too small to project onto the sphere")]
    NearZeroInput,

    #[error("not enough usable points: need {needed}, have {have}")]
    InsufficientPoints { needed: usize, have: usize },

    #[error("malformed instance file: {0}")]
    MalformedFile(String),

    #[error("matrix {name} is asymmetric (max deviation {deviation:.3e})")]
    AsymmetricMatrix { name: &'static str, deviation: f64 },

    #[error("line search failed at outer iteration {iter} after {halvings} halvings")]
    LineSearchFailed { iter: usize, halvings: usize },

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    pub fn at_iter(self, iter: usize) -> Self {
        Error::StepFailed {
            iter,
            source: Box::new(self),
        }
    }

    /// Innermost error, skipping context and iteration wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } | Error::StepFailed { source, .. } => source.root(),
            e => e,
        }
    }
}
