//! ARIMA demand prediction per OD pair, the naive baseline and
//! validation-window model selection.

mod arima;
mod selection;
mod series;

use thiserror::Error;

use crate::metrics::MetricsError;
use crate::network::ZoneId;

pub use arima::{fit_arima, forecast, ArimaModel, ArimaSpec};
pub use selection::{
    fit_fleet, fleet_from_demand, naive_forecast, select_model, Candidate, CandidateScore,
    DemandSeries, FleetFit, OdPair, SelectionReport,
};
pub use series::{acf, difference, difference_heads, integrate, pacf};

/// Series with a smaller divide-by-n variance count as constant.
pub const VARIANCE_FLOOR: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ForecastError {
    #[error("series too short: need at least {needed} values, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("series has zero variance")]
    ZeroVariance,
    #[error("series contains negative or non-finite values")]
    NonFinite,
    #[error("{0}")]
    InvalidSpec(String),
    #[error("empty history")]
    EmptyHistory,
    #[error("least-squares system is singular")]
    Singular,
    #[error("{0}")]
    InvalidValidation(String),
    #[error("OD pair {0}->{1} appears more than once")]
    DuplicatePair(ZoneId, ZoneId),
    #[error("no series supplied")]
    NoSeries,
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}
