use thiserror::Error;

/// Failure modes shared across the library. Each variant maps onto one
/// process exit class in the CLI.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Malformed arguments: wrong vector length, off-grid time, mismatched ids.
    #[error("input error: {0}")]
    Input(String),
    /// A declared property of a model component does not hold.
    #[error("specification error: {0}")]
    Specification(String),
    /// Argument outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// Solver settings that cannot produce a valid run.
    #[error("configuration error: {0}")]
    Configuration(String),
    /// A required hypothesis of the operation is not met.
    #[error("precondition error: {0}")]
    Precondition(String),
    /// Non-finite values or breakdown inside a solver.
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("unsupported configuration: {0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Whether the failure is numerical (as opposed to a bad setup).
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Numerical(_))
    }

    /// Prefix the message with context, keeping the variant.
    pub fn context(self, ctx: &str) -> Self {
        match self {
            Error::Input(m) => Error::Input(format!("{ctx}: {m}")),
            Error::Specification(m) => Error::Specification(format!("{ctx}: {m}")),
            Error::Domain(m) => Error::Domain(format!("{ctx}: {m}")),
            Error::Configuration(m) => Error::Configuration(format!("{ctx}: {m}")),
            Error::Precondition(m) => Error::Precondition(format!("{ctx}: {m}")),
            Error::Numerical(m) => Error::Numerical(format!("{ctx}: {m}")),
            Error::Unsupported(m) => Error::Unsupported(format!("{ctx}: {m}")),
        }
    }
}
