use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter range: {0}")]
    InvalidRange(String),

    #[error("point {0} lies outside [0, 1]")]
    OutOfDomain(f64),

    #[error("window [{lo}, {hi}] does not cover required indices [{need_lo}, {need_hi}]")]
    Window {
        lo: i64,
        hi: i64,
        need_lo: i64,
        need_hi: i64,
    },

    #[error("resolution {0} is too small (need N >= 2)")]
    Resolution(usize),

    #[error("degenerate variance: {0}")]
    DegenerateVariance(String),

    #[error("empty sample")]
    EmptySample,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config error in `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
