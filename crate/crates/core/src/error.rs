use thiserror::Error;

/// Errors raised by the inverse optimal control pipeline.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum IocError {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("forward solver did not converge after {iterations} iterations (stationarity residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("Huu is not invertible at step {step} (minimum eigenvalue {min_eigenvalue:e})")]
    SingularHuu { step: usize, min_eigenvalue: f64 },

    #[error("factorization of {0} failed")]
    Factorization(&'static str),
}

pub type Result<T, E = IocError> = std::result::Result<T, E>;

pub(crate) fn check_dim(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(IocError::Dimension {
            context,
            expected,
            actual,
        })
    }
}
