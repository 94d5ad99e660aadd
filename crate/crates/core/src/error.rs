use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("non-finite position for particle {particle} at t = {time}")]
    NonFinite { time: f64, particle: usize },

    #[error("CFL condition violated: dt = {dt:e} exceeds the stable limit {limit:e}")]
    Cfl { dt: f64, limit: f64 },

    #[error("negative density {value:e} in cell {cell}")]
    NegativeDensity { cell: usize, value: f64 },

    #[error("replica sets do not match: {0}")]
    ReplicaMismatch(String),

    #[error("line {line}: {message}")]
    ConfigLine { line: usize, message: String },

    #[error("override `{arg}`: {message}")]
    Override { arg: String, message: String },

    #[error("missing required config keys: {}", .0.join(", "))]
    MissingKeys(Vec<String>),

    #[error("experiment refused: {0}")]
    Refused(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonFinite { .. } | Error::Cfl { .. } | Error::NegativeDensity { .. }
        )
    }
}
