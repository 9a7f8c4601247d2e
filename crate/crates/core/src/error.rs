use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("point outside the field's domain: {0}")]
    Domain(String),
    #[error("finite-difference stencil left the domain along coordinate {coordinate} (step {step:e}): {reason}")]
    StencilDomain {
        coordinate: String,
        step: f64,
        reason: String,
    },
    #[error("velocity Hessian is singular or not positive-definite")]
    SingularHessian,
    #[error("momentum block of the Hessian is singular")]
    SingularBlock,
    #[error("Newton iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("energy level {energy} is not attainable along this ray: {reason}")]
    EnergyUnreachable { energy: f64, reason: String },
    #[error("integration step failure at t = {t}: {reason}")]
    StepFailure { t: f64, reason: String },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("variable {name} exceeds declared dimension {dim}")]
    Arity { name: String, dim: usize },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("coordinate {index} is not cyclic: sampled dL/dx = {derivative:e}")]
    Invariance { index: usize, derivative: f64 },
    #[error("degenerate curve: total length {length:e}")]
    DegenerateCurve { length: f64 },
    #[error("circles do not intersect")]
    NoIntersection,
    #[error("invalid dimension: {0}")]
    Dimension(String),
}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// Errors that signal a numerical breakdown rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::EnergyUnreachable { .. }
                | Error::StepFailure { .. }
                | Error::SingularHessian
                | Error::SingularBlock
                | Error::NoConvergence { .. }
                | Error::Domain(_)
                | Error::StencilDomain { .. }
                | Error::DegenerateCurve { .. }
                | Error::NoIntersection
        )
    }
}
