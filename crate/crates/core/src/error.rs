use thiserror::Error;

use crate::detection::Arm;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("orders {first} and {second} both lie within {tol_nm} nm of {lambda_nm} nm")]
    AmbiguousOrder {
        first: i64,
        second: i64,
        lambda_nm: f64,
        tol_nm: f64,
    },

    #[error("charge {charge} has no order reachable by red shift to {target_nm} nm inside the modeled band")]
    UnreachableCharge { charge: i32, target_nm: f64 },

    #[error("order {order} needs a blue shift to reach {target_nm} nm")]
    BlueShiftRequired { order: i64, target_nm: f64 },

    #[error("negative heater power {0} mW")]
    NegativePower(f64),

    #[error("wavelength outside the energy-conserving domain: {0}")]
    Domain(String),

    #[error("charge {0} is outside the configured table")]
    UnknownCharge(i32),

    #[error("purity basis carries no power")]
    ZeroBasisMass,

    #[error("histogram has no counts")]
    DegenerateHistogram,

    #[error("histogram span does not cover the side-peak window at offset {offset_bins} bins")]
    SpanTooSmall { offset_bins: i64 },

    #[error("{0:?} click stream is not sorted by time")]
    UnsortedClicks(Arm),

    #[error("config parse error at line {line}: {message}")]
    ConfigParse { line: usize, message: String },

    #[error("config validation failed: {0}")]
    Validation(String),

    #[error("calibration infeasible: {0}")]
    Infeasible(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable category, used for CLI exit reporting.
    pub fn category(&self) -> &'static str {
        match self {
            Error::InvalidParameter(_) | Error::Domain(_) | Error::NegativePower(_) => "parameter",
            Error::AmbiguousOrder { .. }
            | Error::UnreachableCharge { .. }
            | Error::BlueShiftRequired { .. } => "resonator",
            Error::UnknownCharge(_) | Error::ZeroBasisMass => "emitter",
            Error::DegenerateHistogram | Error::SpanTooSmall { .. } | Error::UnsortedClicks(_) => {
                "analysis"
            }
            Error::ConfigParse { .. } => "config-parse",
            Error::Validation(_) => "config-validation",
            Error::Infeasible(_) => "calibration",
            Error::Io(_) | Error::Json(_) => "io",
        }
    }

    /// Process exit code for this error category.
    pub fn exit_code(&self) -> i32 {
        match self.category() {
            "config-parse" => 2,
            "config-validation" => 3,
            "parameter" => 4,
            "resonator" => 5,
            "emitter" => 6,
            "analysis" => 7,
            "calibration" => 8,
            _ => 10,
        }
    }
}
