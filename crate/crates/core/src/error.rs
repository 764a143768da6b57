use thiserror::Error;

/// Errors surfaced by estimation and evaluation routines.
///
/// Variants split into two broad families: invalid caller input
/// (parameters or shapes that can never work) and numerical degeneracies
/// discovered while fitting (data that defeats the estimator). Callers
/// that need to distinguish the two can use [`Error::is_degeneracy`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("{what} did not converge after {iterations} iterations")]
    NonConvergence { what: &'static str, iterations: usize },

    #[error("rank-deficient matrix in {0}")]
    RankDeficient(&'static str),

    #[error("singular {size}x{size} Gram matrix in {context}")]
    SingularGram { context: &'static str, size: usize },

    #[error("degenerate weight vector in {0} (too few observations carry weight)")]
    DegenerateWeights(&'static str),

    #[error("column {column} has zero scale during {stage}")]
    ZeroScaleColumn { column: usize, stage: &'static str },

    #[error("score column {column} has zero scale; score distances are undefined")]
    DegenerateScores { column: usize },

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("all {attempted} starting values failed: last error: {last}")]
    AllStartsFailed { attempted: usize, last: String },

    #[error("at outer iteration {iteration}: {source}")]
    AtIteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Wraps an error with the outer-iteration index at which it occurred.
    pub(crate) fn at_iteration(self, iteration: usize) -> Self {
        Error::AtIteration { iteration, source: Box::new(self) }
    }

    /// True for errors caused by the data (numerical degeneracy at run time)
    /// rather than by invalid parameters or shapes.
    pub fn is_degeneracy(&self) -> bool {
        match self {
            Error::InvalidParameter(_) | Error::ShapeMismatch(_) => false,
            Error::AtIteration { source, .. } => source.is_degeneracy(),
            _ => true,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
