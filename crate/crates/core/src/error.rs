use alloc::string::String;

/// Errors raised by the learning core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },
    #[error("no connected graph after {attempts} attempts")]
    SamplingFailed { attempts: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("did not converge in {iterations} iterations (gradient norm {grad_norm:e})")]
    Convergence { iterations: usize, grad_norm: f64 },
    #[error("message passing requires an acyclic graph (pass the override to run on cycles)")]
    CyclicGraph,
    #[error("protocol violation at learner {learner}: {reason}")]
    Protocol { learner: usize, reason: String },
    #[error("metric undefined: {0}")]
    Undefined(&'static str),
    #[error("singular linear system")]
    Singular,
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::Dimension { expected, actual })
    }
}
