use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unknown configuration key `{0}`")]
    UnknownKey(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("numerical blow-up at t = {t:.6e} s: |E| exceeded {limit:.3e} x input amplitude")]
    BlowUp { t: f64, limit: f64 },

    #[error("cavity did not reach equilibrium within {round_trips} round trips (last relative change {last_change:.3e})")]
    NotConverged { round_trips: usize, last_change: f64 },

    #[error("response evaluated at omega = 0 above Brillouin threshold")]
    ZeroFrequencyPole,

    #[error("fit failed: {0}")]
    FitFailed(String),

    #[error("optimizer: {0}")]
    Optimizer(String),

    #[error("mechanical lasing: displacement reached {amplitude:.3e} m")]
    MechanicalLasing { amplitude: f64 },

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

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::UnknownKey(_) | Error::InvalidParameter { .. } => 2,
            Error::Io(_) => 2,
            _ => 3,
        }
    }
}
