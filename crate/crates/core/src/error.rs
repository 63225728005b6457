use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument fell outside the domain of a function.
    #[error("domain error in {func}: {detail}")]
    Domain { func: &'static str, detail: String },

    /// A caller violated an operation's contract (bad kind, empty input, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// A computed quantity was not finite.
    #[error("non-finite {what} at subtrial {subtrial}, arm {arm}")]
    NonFinite {
        what: &'static str,
        subtrial: usize,
        arm: &'static str,
    },

    /// The treatment toxicity rate saturated at 0 or 1 in floating point.
    #[error("unreachable toxicity rate for subtrial {subtrial}: p = {p}")]
    UnreachableRate { subtrial: usize, p: f64 },

    /// Pr(x <= T) is numerically 0 or 1, so the outcome correlation is undefined.
    #[error("outcome correlation undefined: Pr(x <= T) = {0}")]
    UndefinedCorrelation(f64),

    /// The sampler could not start from a finite log-posterior.
    #[error("chain {chain}: initial log-posterior is not finite ({detail})")]
    Initialisation { chain: usize, detail: String },

    /// A replicate failed inside the operating-characteristics harness.
    #[error("replicate {replicate}, model {model}: {source}")]
    Replicate {
        replicate: usize,
        model: String,
        #[source]
        source: Box<Error>,
    },

    /// No threshold meets the requested error target.
    #[error("calibration failed: no threshold reaches target {target}; best achievable {best}")]
    CalibrationFailed {
        target: f64,
        best: f64,
        /// `(threshold, max per-subtrial error)` pairs tried.
        frontier: Vec<(f64, f64)>,
    },

    /// Malformed tabular input.
    #[error("input error: {0}")]
    Input(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn domain(func: &'static str, detail: impl Into<String>) -> Self {
        Error::Domain {
            func,
            detail: detail.into(),
        }
    }

    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    /// True for failures caused by numerics rather than bad input.
    pub fn is_numeric(&self) -> bool {
        match self {
            Error::NonFinite { .. }
            | Error::UnreachableRate { .. }
            | Error::UndefinedCorrelation(_)
            | Error::Initialisation { .. }
            | Error::CalibrationFailed { .. } => true,
            Error::Replicate { source, .. } => source.is_numeric(),
            _ => false,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
