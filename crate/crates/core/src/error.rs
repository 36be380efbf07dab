use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{field}[{index}] = {value}: observed times must be strictly positive")]
    NonPositiveTime {
        field: &'static str,
        index: usize,
        value: f64,
    },

    #[error("{field}[{index}] = {value}: counts must be nonnegative")]
    NegativeCount {
        field: &'static str,
        index: usize,
        value: f64,
    },

    #[error("{field}[{index}] = {value}: counts must be integers")]
    NonIntegerCount {
        field: &'static str,
        index: usize,
        value: f64,
    },

    #[error("{field}[{index}] = {value}: core areas must be strictly positive")]
    NonPositiveArea {
        field: &'static str,
        index: usize,
        value: f64,
    },

    #[error("{field}[{index}] = {value}: value is invalid")]
    InvalidValue {
        field: &'static str,
        index: usize,
        value: f64,
    },

    #[error("{field} has length {found}, expected {expected}")]
    LengthMismatch {
        field: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("missing required column `{0}`")]
    MissingColumn(String),

    #[error("no events observed; the baseline hazard is not identifiable")]
    NoEvents,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("non-finite log-likelihood: {0}")]
    NonFiniteLik(String),

    #[error("linear predictor {eta} for subject {subject} exceeds the supported maximum {max}")]
    PredictorOverflow { subject: usize, eta: f64, max: f64 },

    #[error("allocation weights for subject {subject} underflowed for every component")]
    DegenerateWeights { subject: usize },

    #[error("{found} draws supplied, at least {required} required")]
    TooFewDraws { required: usize, found: usize },

    #[error("{found} values supplied, at least {required} required")]
    TooFewValues { required: usize, found: usize },

    #[error(
        "posterior density estimate at {test_value} underflowed (closest draw is {min_distance} away)"
    )]
    ZeroDensity { test_value: f64, min_distance: f64 },

    #[error("information matrix is singular")]
    Singular,

    #[error("Newton-Raphson did not converge after {iterations} iterations")]
    NotConverged { iterations: usize },

    #[error("{dropped} of {attempted} SIMEX fits at lambda = {lambda} failed to converge")]
    SimexDropout {
        lambda: f64,
        dropped: usize,
        attempted: usize,
    },

    #[error("sweep {sweep}: {source}")]
    Sweep {
        sweep: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by malformed user input rather than numerical failure.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::NonPositiveTime { .. }
                | Error::NegativeCount { .. }
                | Error::NonIntegerCount { .. }
                | Error::NonPositiveArea { .. }
                | Error::InvalidValue { .. }
                | Error::LengthMismatch { .. }
                | Error::MissingColumn(_)
                | Error::NoEvents
                | Error::InvalidConfig(_)
                | Error::Parse(_)
                | Error::Io(_)
                | Error::Csv(_)
                | Error::Json(_)
        )
    }
}
