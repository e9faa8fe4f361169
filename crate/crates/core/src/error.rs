use thiserror::Error;

/// Errors produced by mesh loading, assembly, solves and the optimization loop.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("mesh topology error: {0}")]
    Topology(String),

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("mesh inverted: cell {cell} has non-positive area after deformation")]
    InvertedMesh { cell: usize },

    #[error("internal assembly error: {0}")]
    Assembly(String),

    #[error("linear solve failed: {0}")]
    LinearSolve(String),

    #[error("singular system: zero pivot associated with dof {dof}")]
    ZeroPivot { dof: usize },

    #[error("state solver did not converge after {iterations} iterations (last residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("state solver failed: {reason}")]
    NewtonFailed {
        report: Box<crate::bingham::NewtonReport>,
        reason: String,
    },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("line search failed: no admissible step size")]
    LineSearchFailed,
}

pub type Result<T> = std::result::Result<T, Error>;
