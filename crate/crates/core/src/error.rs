use thiserror::Error;

/// Every failure the library can report. `code()` gives a stable numeric
/// identifier used by the CLI and the C ABI.
#[derive(Debug, Error)]
pub enum HypouError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid system: {0}")]
    InvalidSystem(String),
    #[error("Kalman condition fails: rank {rank} < {n}")]
    NotHypoelliptic { rank: usize, n: usize },
    #[error("structure error at block {block}: {msg}")]
    Structure { block: usize, msg: String },
    #[error("quadrature tolerance not met: {0}")]
    Quadrature(String),
    #[error("singular covariance: {0}")]
    SingularCovariance(String),
    #[error("grid does not cover the sampled region: {0}")]
    Coverage(String),
    #[error("split step too large: lambda*dt = {0} > 0.5")]
    SplitStep(f64),
    #[error("unsupported Hoelder exponent: {0}")]
    Exponent(String),
    #[error("system outside the homogeneous class: {0}")]
    Class(String),
    #[error("convergence table not monotone: {0}")]
    NonmonotoneConvergence(String),
    #[error("Monte Carlo budget exceeded: {0}")]
    McBudget(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl HypouError {
    pub fn code(&self) -> i32 {
        match self {
            HypouError::DimensionMismatch(_) => 10,
            HypouError::InvalidSystem(_) => 11,
            HypouError::NotHypoelliptic { .. } => 12,
            HypouError::Structure { .. } => 13,
            HypouError::Quadrature(_) => 20,
            HypouError::SingularCovariance(_) => 21,
            HypouError::Coverage(_) => 22,
            HypouError::SplitStep(_) => 30,
            HypouError::NonmonotoneConvergence(_) => 31,
            HypouError::McBudget(_) => 32,
            HypouError::Exponent(_) => 40,
            HypouError::Class(_) => 41,
            HypouError::InvalidArgument(_) => 50,
            HypouError::Config(_) => 60,
            HypouError::Io(_) => 61,
        }
    }

    /// Short machine-readable name, stable across releases.
    pub fn name(&self) -> &'static str {
        match self {
            HypouError::DimensionMismatch(_) => "DimensionMismatch",
            HypouError::InvalidSystem(_) => "InvalidSystem",
            HypouError::NotHypoelliptic { .. } => "NotHypoelliptic",
            HypouError::Structure { .. } => "StructureError",
            HypouError::Quadrature(_) => "QuadratureError",
            HypouError::SingularCovariance(_) => "SingularCovariance",
            HypouError::Coverage(_) => "CoverageError",
            HypouError::SplitStep(_) => "SplitStepError",
            HypouError::NonmonotoneConvergence(_) => "NonmonotoneConvergence",
            HypouError::McBudget(_) => "McBudgetExceeded",
            HypouError::Exponent(_) => "ExponentError",
            HypouError::Class(_) => "ClassError",
            HypouError::InvalidArgument(_) => "InvalidArgument",
            HypouError::Config(_) => "ConfigError",
            HypouError::Io(_) => "IoError",
        }
    }
}

pub type Result<T> = std::result::Result<T, HypouError>;
