use thiserror::Error;

/// Every failure mode the library can report.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum CmvError {
    #[error("matrix is not Hermitian (deviation {deviation:e})")]
    NotHermitian { deviation: f64 },
    #[error("matrix is not positive semidefinite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPsd { min_eigenvalue: f64 },
    #[error("spectrum not in the open right half-plane (smallest real part {min_real:e})")]
    SpectrumNotInRightHalfPlane { min_real: f64 },
    #[error("matrix is not unitary (deviation {deviation:e})")]
    NotUnitary { deviation: f64 },
    #[error("eigen-decomposition failed: {0}")]
    EigenFailure(String),
    #[error("coefficient at k = {k} is not a strict contraction (norm {norm})")]
    ContractivityViolated { k: i64, norm: f64 },
    #[error("invalid arc ({theta0}, {theta1})")]
    InvalidArc { theta0: f64, theta1: f64 },
    #[error("invalid range: {0}")]
    InvalidRange(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("spectral parameter too close to the unit circle (|z| = {modulus})")]
    NearUnitCircle { modulus: f64 },
    #[error("linear solve failed: {0}")]
    SolveFailure(String),
    #[error("site {k0} is too close to the truncation boundary for order {p}")]
    TooCloseToBoundary { k0: i64, p: usize },
    #[error("singular pivot in Cayley transform")]
    SingularPivot,
    #[error("singular pivot in Riccati step")]
    PivotSingular,
    #[error("Schur iteration did not converge (depth {depth}, change {change:e})")]
    NoConvergence { depth: usize, change: f64 },
    #[error("Cayley transform singular")]
    CayleySingular,
    #[error("Wronskian singular")]
    WronskianSingular,
    #[error("transfer step singular at k = {k}")]
    TransferSingular { k: i64 },
    #[error("logarithm undefined at grid point {index}")]
    LogDomainViolation { index: usize },
    #[error("matrix function value not invertible")]
    NonInvertible,
    #[error("radial schedule too coarse (mass defect {defect:e})")]
    ScheduleTooCoarse { defect: f64 },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("i/o: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, CmvError>;

impl From<std::io::Error> for CmvError {
    fn from(e: std::io::Error) -> Self {
        CmvError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for CmvError {
    fn from(e: serde_json::Error) -> Self {
        CmvError::InvalidInput(e.to_string())
    }
}

impl From<csv::Error> for CmvError {
    fn from(e: csv::Error) -> Self {
        CmvError::Io(e.to_string())
    }
}
