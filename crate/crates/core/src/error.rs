use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Problems found while decoding one of the binary artifact formats.
#[derive(Debug, Error)]
pub enum FormatError {
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },
    #[error("unsupported {what} version {found} (expected {expected})")]
    Version {
        what: &'static str,
        expected: u16,
        found: u16,
    },
    #[error("truncated payload while reading {0}")]
    Truncated(String),
    #[error("invalid content: {0}")]
    Invalid(String),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Io(std::io::Error),
    #[error("format error: {0}")]
    Format(#[from] FormatError),
    #[error("shape mismatch: expected {expected}, found {found}")]
    Shape { expected: usize, found: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("numeric divergence: {0}")]
    Divergence(String),
    #[error("solver did not converge after {iterations} iterations (KKT gap {gap:.3e})")]
    NonConvergence { iterations: usize, gap: f64 },
    #[error("target rate {target} unachievable: achievable rates {below} or {above}")]
    UnachievableRate { target: f64, below: f64, above: f64 },
    #[error("sample is not attackable up to epsilon {cap}")]
    Unattackable { cap: f64 },
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            Error::Format(FormatError::Truncated(e.to_string()))
        } else {
            Error::Io(e)
        }
    }
}

pub(crate) fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::Shape { expected, found })
    }
}
