use thiserror::Error;

/// Every failure the library can report.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("malformed mesh at line {line}: {reason}")]
    MalformedMesh { line: usize, reason: String },
    #[error("triangle {triangle} references point {index} outside 1..={n_points}")]
    DanglingIndex {
        triangle: usize,
        index: usize,
        n_points: usize,
    },
    #[error("triangle {0} has zero area")]
    NonPositiveArea(usize),

    #[error("actuator cell {0} contains no interior node; refine the mesh")]
    EmptyCell(usize),
    #[error("vector {0} is linearly dependent on its predecessors")]
    RankDeficient(usize),

    #[error("singular linear system: {0}")]
    SingularSystem(String),
    #[error("iterative solver did not converge in {iterations} iterations (relative residual {residual:e})")]
    SolverNonConvergence { iterations: usize, residual: f64 },
    #[error("Lyapunov equation is singular (eigenvalues of A and -A overlap)")]
    SingularLyapunov,
    #[error("no stabilizing initial guess for Newton-Kleinman")]
    NoStabilizingSeed,
    #[error("Newton-Kleinman hit the iteration cap {iterations} (residual {residual:e})")]
    MaxIterations { iterations: usize, residual: f64 },
    #[error("Riccati solution lost positive definiteness at step {0}")]
    LossOfPositivity(usize),
    #[error("homotopy failed at tau = {tau}: {source}")]
    Homotopy { tau: f64, source: Box<Error> },
    #[error("Riccati sweep failed at step {step}: {source}")]
    RiccatiStep { step: usize, source: Box<Error> },

    #[error("initial boundary trace is not B_psi * kappa0 (mismatch {0:e})")]
    CompatibilityViolation(f64),
    #[error("solution blew up at step {0}")]
    BlowUp(usize),
    #[error("Newton iteration diverged at step {0}")]
    NewtonDivergence(usize),

    #[error("expression is not differentiable: {0}")]
    NonDifferentiable(String),
    #[error("syntax error at position {pos}: expected {expected}")]
    SyntaxError { pos: usize, expected: String },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("log-scale plot received non-positive value {0}")]
    NonPositiveLogValue(f64),
    #[error("initial norm is zero")]
    ZeroInitialNorm,
    #[error("entry {index} is not positive ({value})")]
    NonPositiveEntry { index: usize, value: f64 },

    #[error("config [{section}] {key}: {reason}")]
    Config {
        section: String,
        key: String,
        reason: String,
    },
    #[error("missing section [{0}]")]
    MissingSection(String),
    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::DimensionMismatch(msg.into())
    }

    pub(crate) fn config(section: &str, key: &str, reason: impl Into<String>) -> Self {
        Error::Config {
            section: section.to_string(),
            key: key.to_string(),
            reason: reason.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
