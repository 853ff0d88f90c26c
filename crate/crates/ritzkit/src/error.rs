use thiserror::Error;

/// Errors produced by evaluation, sampling, training and diagnostics.
#[derive(Debug, Error)]
pub enum RitzError {
    #[error("derivative order {requested} exceeds supported maximum {max}")]
    OrderExceeded { requested: usize, max: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("normal vector is not unit length (|n| = {norm})")]
    NonUnitNormal { norm: f64 },

    #[error("degenerate domain: {0}")]
    DegenerateDomain(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("sign condition violated: h(u)*u = {value} < 0 at u = {u}")]
    SignAudit { u: f64, value: f64 },

    #[error("gradient flow step size underflow: dt fell below {floor}")]
    StepUnderflow { floor: f64 },

    #[error("inner proximal solve failed to improve on the starting point")]
    InnerSolveFailed,

    #[error("trace too short for rate fitting: need {need} usable tail records, have {have}")]
    InsufficientTail { need: usize, have: usize },

    #[error("trace is flat: loss gap below 1e-14, rate regime undetermined")]
    FlatTrace,

    #[error("matrix is not symmetric (max asymmetry {0})")]
    NotSymmetric(f64),

    #[error("initial Gram matrix has zero Frobenius norm")]
    ZeroInitialNorm,

    #[error("Gram matrices have mismatched shape or provenance")]
    GramMismatch,

    #[error("reference solution undefined: {0}")]
    ReferenceDomain(String),

    #[error("unknown built-in function id '{0}'")]
    UnknownFunction(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, RitzError>;
