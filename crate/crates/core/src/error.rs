use thiserror::Error;

use crate::profiles::ControlProfile;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain where the operation is defined.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid profile: {0}")]
    InvalidProfile(String),

    #[error("profiles cover different horizons ({left} min vs {right} min)")]
    HorizonMismatch { left: f64, right: f64 },

    /// Reference usage plus the instructed increase exceeds full power.
    #[error(
        "instruction {index} is infeasible: u_ref + u_ask = {level} > 1 at t = {time} min"
    )]
    InfeasibleInstruction { index: usize, time: f64, level: f64 },

    #[error("invalid instruction sequence: {0}")]
    InvalidInstructions(String),

    /// A scenario or configuration value breaks an invariant. `key` names the field.
    #[error("invalid value for `{key}`: {reason}")]
    InvalidParameter { key: String, reason: String },

    #[error("non-finite value encountered at parameter index {index}")]
    NonFinite { index: usize },

    /// No start produced a point passing the exact constraint check.
    #[error("no feasible point found; best total loss {total_loss:e} (state {state_loss:e}, delivery {delivery_loss:e})")]
    Infeasible {
        control: Box<ControlProfile>,
        total_loss: f64,
        state_loss: f64,
        delivery_loss: f64,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { key: key.into(), reason: reason.into() }
    }
}
