use thiserror::Error;

/// Errors raised by the engine. Variants map onto the CLI exit codes via
/// [`Error::exit_code`].
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("frame error: {0}")]
    Frame(String),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("value is not in the integer span of the basis")]
    NotInSpan,

    #[error("monomial {witness:?} does not divide the polynomial")]
    NotDivisible { witness: Vec<u32> },

    #[error("ValueNotInGroup: slope {slope} is not in the value group")]
    ValueNotInGroup { slope: String },

    #[error("ResidueNotInField: residue polynomial {residue} has no usable root in the coefficient field")]
    ResidueNotInField { residue: String },

    #[error("NotInMaximalIdeal: {0}")]
    NotInMaximalIdeal(String),

    #[error("fraction not in the valuation ring: value(g) < value(h)")]
    NotInValuationRing,

    #[error("determinant condition fails at elimination stage {stage}")]
    SingularSystem { stage: usize },

    #[error("step cap {cap} exceeded in {context}")]
    StepCap {
        cap: usize,
        context: String,
        trace: Vec<String>,
    },

    #[error("cancelled")]
    Cancelled,

    #[error("internal consistency failure: {0}")]
    Internal(String),

    #[error("verification failed: {0}")]
    Verify(String),

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    pub fn precondition(msg: impl Into<String>) -> Self {
        Error::Precondition(msg.into())
    }

    pub fn internal(msg: impl Into<String>) -> Self {
        Error::Internal(msg.into())
    }

    /// Exit code used by the command line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse { .. } => 3,
            Error::StepCap { .. } | Error::Internal(_) => 4,
            Error::Io(_) => 1,
            _ => 2,
        }
    }

    /// Short machine-readable reason tag.
    pub fn reason(&self) -> &'static str {
        match self {
            Error::Frame(_) => "FrameError",
            Error::Parse { .. } => "ParseError",
            Error::Precondition(_) => "PreconditionViolated",
            Error::NotInSpan => "NotInSpan",
            Error::NotDivisible { .. } => "NotDivisible",
            Error::ValueNotInGroup { .. } => "ValueNotInGroup",
            Error::ResidueNotInField { .. } => "ResidueNotInField",
            Error::NotInMaximalIdeal(_) => "NotInMaximalIdeal",
            Error::NotInValuationRing => "NotInValuationRing",
            Error::SingularSystem { .. } => "SingularSystem",
            Error::StepCap { .. } => "StepCapExceeded",
            Error::Cancelled => "Cancelled",
            Error::Internal(_) => "InternalError",
            Error::Verify(_) => "VerifyFailed",
            Error::Io(_) => "IoError",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
