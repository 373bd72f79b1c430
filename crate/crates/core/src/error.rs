use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("qubit index {index} out of range for {n_qubits}-qubit register")]
    QubitOutOfRange { index: usize, n_qubits: usize },

    #[error("CNOT control and target are both qubit {0}")]
    ControlIsTarget(usize),

    #[error("register of {0} qubits exceeds the dense simulator limit of {max}", max = crate::qsim::MAX_QUBITS)]
    TooManyQubits(usize),

    #[error("parameter slot {0} is {1}")]
    BadSlot(usize, &'static str),

    #[error("expected {expected} parameters, got {got}")]
    ParamCount { expected: usize, got: usize },

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("length {0} is not a power of two")]
    NotPowerOfTwo(usize),

    #[error("cannot amplitude-encode the zero vector")]
    ZeroVector,

    #[error("degenerate input at time step {step}: {source}")]
    AtStep {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("constant series has zero spread on the fit window")]
    ConstantSeries,

    #[error("kernel matrix not positive definite after jitter; hyperparameters {0}")]
    NotPsd(String),

    #[error("non-finite loss at epoch {epoch}")]
    NanLoss { epoch: usize },

    #[error("non-finite gradient")]
    NonFiniteGradient,

    #[error("linear solve failed: {0}")]
    Solve(&'static str),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("csv line {line}: {message}")]
    Csv { line: u64, message: String },

    #[error("serialization: {0}")]
    Serde(String),
}

/// Coarse failure classes used by the command-line front end.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    Data,
    Numerical,
}

impl Error {
    pub fn at_step(step: usize, source: Error) -> Self {
        Error::AtStep {
            step,
            source: Box::new(source),
        }
    }

    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config(_)
            | Error::QubitOutOfRange { .. }
            | Error::ControlIsTarget(_)
            | Error::TooManyQubits(_)
            | Error::BadSlot(..)
            | Error::ParamCount { .. }
            | Error::Dimension { .. }
            | Error::NotPowerOfTwo(_) => ErrorClass::Usage,
            Error::Io { .. } | Error::Csv { .. } | Error::Data(_) | Error::Serde(_) => {
                ErrorClass::Data
            }
            Error::AtStep { source, .. } => source.class(),
            Error::ConstantSeries => ErrorClass::Data,
            _ => ErrorClass::Numerical,
        }
    }
}
