use thiserror::Error;

use crate::touchstone::ParameterKind;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("touchstone line {line}: {message}")]
    Touchstone { line: usize, message: String },

    #[error("no data rows")]
    NoData,

    #[error("{0} parameters are not supported for analysis; an S-parameter block is required")]
    UnsupportedParameter(ParameterKind),

    #[error("reference impedance {0} ohm differs from 50 ohm and renormalization is not supported")]
    Renormalization(f64),

    #[error("frequency {freq} Hz is outside the data range [{min}, {max}] Hz")]
    FrequencyOutOfRange { freq: f64, min: f64, max: f64 },

    #[error("invalid topology: {0}")]
    Topology(String),

    #[error("unstable interconnection at {freq} Hz (condition estimate {condition:.3e})")]
    UnstableInterconnection { freq: f64, condition: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("degenerate ratio: {0}")]
    DegenerateRatio(String),

    #[error("no local minimum in [{lo}, {hi}]")]
    NoMinimum { lo: f64, hi: f64 },
}
