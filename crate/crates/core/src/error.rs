use alloc::string::String;
use core::fmt;

/// Errors raised by the numeric core.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A configuration value is out of its valid domain.
    Config { field: &'static str, reason: String },
    /// Two arrays that must agree in shape do not.
    Shape { context: &'static str, expected: usize, found: usize },
    /// A linear system could not be solved.
    Singular,
    /// A state channel was absent or had the wrong length.
    MissingChannel(&'static str),
    /// A required input (e.g. a reference trajectory) was not supplied.
    MissingInput(&'static str),
    /// Backward pass requested from a node that is not a scalar.
    NonScalarLoss { len: usize },
    /// The training loss became NaN or infinite.
    Divergence { update: usize, detail: String },
    /// A parameter set does not match the architecture it is loaded into.
    Architecture(String),
}

pub type Result<T> = core::result::Result<T, Error>;

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Config { field, reason } => write!(f, "invalid config `{field}`: {reason}"),
            Error::Shape { context, expected, found } => {
                write!(f, "{context}: expected length {expected}, found {found}")
            }
            Error::Singular => f.write_str("singular linear system"),
            Error::MissingChannel(name) => write!(f, "state channel `{name}` missing or malformed"),
            Error::MissingInput(name) => write!(f, "required input `{name}` not provided"),
            Error::NonScalarLoss { len } => {
                write!(f, "backward requires a scalar loss, got {len} elements")
            }
            Error::Divergence { update, detail } => {
                write!(f, "training diverged at update {update}: {detail}")
            }
            Error::Architecture(msg) => write!(f, "architecture mismatch: {msg}"),
        }
    }
}

impl core::error::Error for Error {}

pub(crate) fn config_err(field: &'static str, reason: impl Into<String>) -> Error {
    Error::Config { field, reason: reason.into() }
}

pub(crate) fn check_len(context: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::Shape { context, expected, found })
    }
}
