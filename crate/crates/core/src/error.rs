use thiserror::Error;

/// Errors raised by configuration loading, kernel evaluation and pricing.
#[derive(Debug, Error)]
pub enum Error {
    #[error("curve `{curve}`: {reason}")]
    InvalidCurve { curve: String, reason: String },

    #[error("{0}")]
    InvalidParam(String),

    #[error("{op}: argument order violated ({detail})")]
    ArgumentOrder { op: &'static str, detail: String },

    #[error("time {t} lies beyond the model horizon {horizon}")]
    BeyondHorizon { t: f64, horizon: f64 },

    #[error("deterministic limit: covariance is degenerate on [{t}, {v}], use a point mass")]
    DegenerateCovariance { t: f64, v: f64 },

    #[error("payoff box of {box_sd} standard deviations is too narrow (outside mass {mass:e})")]
    BoxTooNarrow { box_sd: f64, mass: f64 },

    #[error("exponent {exponent} exceeds the overflow guard; parameters are unrealistic")]
    Overflow { exponent: f64 },

    #[error("contract kind `{0}` is not supported by this operation")]
    UnsupportedKind(&'static str),

    #[error("invalid simulation config: {0}")]
    InvalidSimConfig(String),

    #[error("config field `{field}`: {message}")]
    ConfigField { field: String, message: String },

    #[error("failed to parse config: {0}")]
    Parse(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_order(op: &'static str, a: f64, b: f64) -> Result<()> {
    if a <= b {
        Ok(())
    } else {
        Err(Error::ArgumentOrder {
            op,
            detail: format!("{a} > {b}"),
        })
    }
}
