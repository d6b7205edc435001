use std::path::PathBuf;

use crate::model::Strategy;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A parameter is outside its domain (negative duration, fraction outside [0,1], ...).
    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    /// The first-order model breaks down for these parameters. `value` is the
    /// offending quantity (raw waste, radicand, denominator) so callers can
    /// report where the model stops being meaningful.
    #[error("outside the model's validity region: {what} = {value}")]
    ModelValidity { what: &'static str, value: f64 },

    #[error("strategy {strategy} is not applicable: {reason}")]
    StrategyInapplicable {
        strategy: Strategy,
        reason: &'static str,
    },

    /// The simulation reached the end of the generated trace before the job
    /// completed. Callers regenerate the trace with a longer horizon.
    #[error("trace exhausted at t = {clock} s (horizon {horizon} s)")]
    TraceExhausted { clock: f64, horizon: f64 },

    /// The job did not complete within the largest horizon the simulator
    /// is willing to generate: the policy makes (almost) no progress.
    #[error("job not complete after {horizon} s ({slowdown:.0} times its fault-free length)")]
    Diverged { horizon: f64, slowdown: f64 },

    #[error("period search failed: {0}")]
    SearchFailure(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error on {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

impl Error {
    pub(crate) fn invalid(name: &'static str, value: f64, reason: &'static str) -> Self {
        Error::InvalidParameter {
            name,
            value,
            reason,
        }
    }

    pub(crate) fn validity(what: &'static str, value: f64) -> Self {
        Error::ModelValidity { what, value }
    }

    /// True for errors that mean "the model does not apply here" rather than
    /// "the input is malformed".
    pub fn is_model_validity(&self) -> bool {
        matches!(
            self,
            Error::ModelValidity { .. }
                | Error::StrategyInapplicable { .. }
                | Error::Diverged { .. }
        )
    }
}
