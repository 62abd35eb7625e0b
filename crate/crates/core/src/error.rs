use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("no boundary-case law in this family: {0}")]
    NoSolution(String),
    #[error("log-Laplace transform diverges at s = {0}")]
    Divergent(f64),
    #[error("malformed tree: {0}")]
    MalformedTree(String),
    #[error("step budget of {0} steps exceeded")]
    StepBudgetExceeded(u64),
    #[error("outside the validated parameter range: {0}")]
    OutOfValidatedRange(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("quadrature failed to reach tolerance {tolerance:e} (estimated error {estimate:e})")]
    QuadratureFailure { tolerance: f64, estimate: f64 },
    #[error("enumeration budget exceeded: {0}")]
    BudgetExceeded(String),
    #[error("singular linear system (pivot {0:e})")]
    SingularSystem(f64),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("records from different configurations: {0}")]
    ConfigMismatch(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
