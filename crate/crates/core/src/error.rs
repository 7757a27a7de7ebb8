use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LabError {
    #[error("invalid metric: {0}")]
    InvalidMetric(String),
    #[error("pole condition violated: {0}")]
    PoleMismatch(String),
    #[error("tau must be positive, got {0}")]
    InvalidTau(f64),
    #[error("unsupported base point: {0}")]
    UnsupportedBase(String),
    #[error("positivity could not be recovered after {halvings} step halvings (last dt = {dt})")]
    StepFailure { halvings: usize, dt: f64 },
    #[error("heat kernel truncation budget exceeded: need {required} terms, budget {budget}")]
    TruncationError { required: usize, budget: usize },
    #[error("initial time {t0} below resolution floor {floor}")]
    UnderResolved { t0: f64, floor: f64 },
    #[error("log of nonpositive density at node {node} (u = {value})")]
    LogDomain { node: usize, value: f64 },
    #[error("constraint violated: {0}")]
    ConstraintViolated(String),
    #[error("domain error: {0}")]
    DomainError(String),
    #[error("unsupported grid: {0}")]
    UnsupportedGrid(String),
    #[error("degenerate level {level}: band quadrature cannot resolve it")]
    DegenerateLevel { level: f64 },
    #[error("invalid resolution: {0}")]
    InvalidResolution(String),
    #[error("field length {got} does not match grid node count {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for LabError {
    fn from(e: std::io::Error) -> Self {
        LabError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, LabError>;
