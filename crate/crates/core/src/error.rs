use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum JetError {
    #[error("unsupported jet order {0} (maximum is 3)")]
    UnsupportedOrder(usize),
    #[error("jet order mismatch: {left} vs {right}")]
    OrderMismatch { left: usize, right: usize },
    #[error("division by a jet with zero value")]
    DivisionByZero,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TapeError {
    #[error("backward needs exactly one scalar output, got {0}")]
    NonScalarOutput(usize),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("invalid network configuration: {0}")]
    Network(String),
    #[error("invalid model configuration: {0}")]
    Model(String),
    #[error("invalid training configuration: {0}")]
    Training(String),
    #[error(transparent)]
    Jet(#[from] JetError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ShapeError {
    #[error("length mismatch: expected {expected}, got {got}")]
    Length { expected: usize, got: usize },
    #[error("derivative order {requested} on axis {axis} exceeds stored order {stored}")]
    OrderExceeded {
        axis: usize,
        requested: usize,
        stored: usize,
    },
    #[error("coordinate {value} on axis {axis} lies outside [{lo}, {hi}]")]
    OutOfDomain {
        axis: usize,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("{0}")]
    Other(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PdeError {
    #[error("unknown problem id `{0}`; valid ids: {ids}", ids = crate::pde::ProblemId::ALL_NAMES.join(", "))]
    UnknownProblem(String),
    #[error("problem `{0}` has no analytic reference solution")]
    NoAnalyticReference(&'static str),
    #[error("problem `{0}` has no separable closed form")]
    NotSeparable(&'static str),
    #[error(transparent)]
    Shape(#[from] ShapeError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error(transparent)]
    Shape(#[from] ShapeError),
    #[error(transparent)]
    Jet(#[from] JetError),
    #[error(transparent)]
    NonFinite(#[from] NonFiniteError),
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Shape(#[from] ShapeError),
    #[error(transparent)]
    Pde(#[from] PdeError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("non-finite loss at step {step}: {detail}")]
    NonFinite { step: usize, detail: String },
    #[error("reference solution has zero norm")]
    ZeroReference,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("non-finite value in {0}")]
pub struct NonFiniteError(pub String);
