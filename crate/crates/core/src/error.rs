use thiserror::Error;

use crate::dynamics::InfectionState;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// An input lies outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Caller violated a documented precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    /// The adaptive integrator gave up. `last_good` is the last accepted state.
    #[error("integration failed at t = {t}: {reason}", t = last_good.t)]
    Integration {
        reason: String,
        last_good: InfectionState,
    },

    /// The trajectory ends above the detection limit, so a duration cannot be closed.
    #[error("horizon too short: viral load is still {v_end:.3e} copies/mL at t = {t_end} (limit {limit})")]
    HorizonTooShort { t_end: f64, v_end: f64, limit: f64 },

    #[error("missing event: {0}")]
    MissingEvent(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("optimization failed: {0}")]
    Optimization(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

impl Error {
    /// Short machine-readable tag, used by the CLI when reporting failures.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::Contract(_) => "contract",
            Error::Integration { .. } => "integration",
            Error::HorizonTooShort { .. } => "horizon_too_short",
            Error::MissingEvent(_) => "missing_event",
            Error::Config(_) => "config",
            Error::Parse { .. } => "parse",
            Error::Optimization(_) => "optimization",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
            Error::Toml(_) => "toml",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
