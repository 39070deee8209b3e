//! Crate-wide error type.

use crate::linsolve::SolveReport;

/// Errors produced by the solver library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Grid sizes must be powers of two with at least four points per axis.
    #[error("invalid grid size {n}: expected a power of two >= 4")]
    InvalidSize { n: usize },

    /// Two fields (or a field and a spectrum) disagree in size, dimension or
    /// boundary condition.
    #[error("shape mismatch: {context}")]
    ShapeMismatch { context: String },

    /// A parameter is outside its admissible range.
    #[error("invalid argument: {context}")]
    InvalidArgument { context: String },

    /// The operation is only defined for a subset of inputs (e.g. 1D only).
    #[error("unsupported operation: {context}")]
    Unsupported { context: String },

    /// Dense factorization detected a singular or near-singular system.
    #[error("singular system: condition estimate {condition_estimate:.3e} exceeds 1e12")]
    SingularSystem { condition_estimate: f64 },

    /// An iterative or direct solve did not reach the requested residual.
    /// Carries the last report and the best iterate found so far.
    #[error(
        "linear solve failed after {} iterations (relative residual {:.3e})",
        .report.iterations, .report.relative_residual
    )]
    SolverFailure {
        report: SolveReport,
        best_iterate: Vec<f64>,
    },

    /// A Krylov inner product collapsed below the breakdown threshold.
    #[error("krylov breakdown at iteration {iteration}: |inner product| = {magnitude:.3e}")]
    Breakdown { iteration: usize, magnitude: f64 },

    /// Malformed PGM input.
    #[error("pgm parse error at byte {offset}: {message}")]
    PgmParse { offset: usize, message: String },

    /// Config file error, pointing at the offending line.
    #[error("config error at line {line}: {message}")]
    Config { line: usize, message: String },

    /// I/O failure, annotated with the path involved.
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn shape(context: impl Into<String>) -> Self {
        Error::ShapeMismatch {
            context: context.into(),
        }
    }

    pub(crate) fn arg(context: impl Into<String>) -> Self {
        Error::InvalidArgument {
            context: context.into(),
        }
    }

    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
