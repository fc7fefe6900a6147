//! Goodness-of-fit measures for link-flow calibration and demand forecasts.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("series lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("series needs at least {needed} points, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("denominator is zero")]
    DegenerateDenominator,
}

/// Which mean the R² denominator is centred on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MeanMode {
    /// Grand mean of the simulated values, as in the calibration formula
    /// this toolkit reproduces.
    #[default]
    Simulated,
    /// Grand mean of the observed values (textbook coefficient of
    /// determination).
    Observed,
}

fn check(a: &[f64], b: &[f64], min_len: usize) -> Result<(), MetricsError> {
    if a.len() != b.len() {
        return Err(MetricsError::LengthMismatch(a.len(), b.len()));
    }
    if a.len() < min_len {
        return Err(MetricsError::TooShort {
            needed: min_len,
            got: a.len(),
        });
    }
    Ok(())
}

/// `1 - sum (obs - sim)^2 / sum (obs - mean)^2`, with the mean of the
/// simulated series.
pub fn r_squared(observed: &[f64], simulated: &[f64]) -> Result<f64, MetricsError> {
    r_squared_with(observed, simulated, MeanMode::Simulated)
}

pub fn r_squared_with(
    observed: &[f64],
    simulated: &[f64],
    mode: MeanMode,
) -> Result<f64, MetricsError> {
    check(observed, simulated, 2)?;
    let centre = match mode {
        MeanMode::Simulated => simulated,
        MeanMode::Observed => observed,
    };
    let mean = centre.iter().sum::<f64>() / centre.len() as f64;
    let residual: f64 = observed
        .iter()
        .zip(simulated)
        .map(|(o, s)| (o - s).powi(2))
        .sum();
    let spread: f64 = observed.iter().map(|o| (o - mean).powi(2)).sum();
    if spread == 0.0 {
        return Err(MetricsError::DegenerateDenominator);
    }
    Ok(1.0 - residual / spread)
}

/// `sqrt(sum (x - xhat)^2 / sum (x + xhat)^2)`.
pub fn nrmse(actual: &[f64], predicted: &[f64]) -> Result<f64, MetricsError> {
    check(actual, predicted, 1)?;
    let (num, den) = actual
        .iter()
        .zip(predicted)
        .fold((0.0, 0.0), |(n, d), (x, p)| {
            (n + (x - p).powi(2), d + (x + p).powi(2))
        });
    if den == 0.0 {
        return Err(MetricsError::DegenerateDenominator);
    }
    Ok((num / den).sqrt())
}

pub fn rmse(actual: &[f64], predicted: &[f64]) -> Result<f64, MetricsError> {
    check(actual, predicted, 1)?;
    let sse: f64 = actual
        .iter()
        .zip(predicted)
        .map(|(x, p)| (x - p).powi(2))
        .sum();
    Ok((sse / actual.len() as f64).sqrt())
}

/// The three measures evaluated on one aligned pair of series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitReport {
    /// `None` when the R² denominator vanishes.
    pub r_squared: Option<f64>,
    /// `None` when both series are identically zero.
    pub nrmse: Option<f64>,
    pub rmse: f64,
    pub n_points: usize,
}

impl FitReport {
    pub fn new(observed: &[f64], simulated: &[f64]) -> Result<FitReport, MetricsError> {
        let rmse = rmse(observed, simulated)?;
        Ok(FitReport {
            r_squared: r_squared(observed, simulated).ok(),
            nrmse: nrmse(observed, simulated).ok(),
            rmse,
            n_points: observed.len(),
        })
    }
}
