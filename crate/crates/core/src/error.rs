use std::path::PathBuf;

/// Errors raised by the numerical routines and the experiment harness.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate eigenvector draw")]
    DegenerateEigenvectorDraw,

    #[error("complex or defective spectrum: {0}")]
    ComplexOrDefective(String),

    #[error("nonpositive eigenvalue {0}")]
    NonpositiveEigenvalue(f64),

    #[error("singular matrix")]
    SingularMatrix,

    #[error("degenerate equilibrium: more than one zero weight")]
    DegenerateEquilibrium,

    #[error("requires positive lambda, got {0}")]
    RequiresPositiveLambda(f64),

    #[error("requires negative lambda, got {0}")]
    RequiresNegativeLambda(f64),

    #[error("step {step} exceeds critical value {critical}")]
    StepExceedsCritical { step: f64, critical: f64 },

    #[error("no bracket found: {0}")]
    NoBracket(String),

    #[error("diverged at epoch {epoch} (loss {loss})")]
    Diverged { epoch: usize, loss: f64 },

    #[error("grid too coarse: axis {axis} has {points} points, need at least 3")]
    GridTooCoarse { axis: usize, points: usize },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("config validation failed:\n{}", .0.join("\n"))]
    Validation(Vec<String>),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Wraps an error with a description of the run step that produced it.
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// True for config problems (as opposed to numeric failures downstream).
    pub fn is_validation(&self) -> bool {
        match self {
            Error::Validation(_) => true,
            Error::Context { source, .. } => source.is_validation(),
            _ => false,
        }
    }
}
