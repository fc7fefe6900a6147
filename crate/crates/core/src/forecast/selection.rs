use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;

use super::arima::{fit_arima, forecast, ArimaModel, ArimaSpec};
use super::ForecastError;
use crate::metrics::{nrmse, r_squared, MetricsError};
use crate::network::ZoneId;
use crate::simulator::OdMatrixSeries;

pub type OdPair = (ZoneId, ZoneId);

/// Trips per interval for one OD pair.
#[derive(Debug, Clone, PartialEq)]
pub struct DemandSeries {
    pub od_pair: OdPair,
    pub values: Vec<f64>,
    pub interval_length: f64,
}

impl DemandSeries {
    pub fn new(od_pair: OdPair, values: Vec<f64>, interval_length: f64) -> Result<Self, ForecastError> {
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(ForecastError::NonFinite);
        }
        Ok(DemandSeries {
            od_pair,
            values,
            interval_length,
        })
    }
}

/// Every pair of an OD matrix as its own series.
pub fn fleet_from_demand(demand: &OdMatrixSeries) -> Vec<DemandSeries> {
    let len = demand.grid().interval_length;
    demand
        .pairs()
        .iter()
        .enumerate()
        .map(|(k, &pair)| DemandSeries {
            od_pair: pair,
            values: demand.series(k).to_vec(),
            interval_length: len,
        })
        .collect()
}

/// Repeats the last observation.
pub fn naive_forecast(history: &[f64], steps: usize) -> Result<Vec<f64>, ForecastError> {
    let last = *history.last().ok_or(ForecastError::EmptyHistory)?;
    Ok(vec![last; steps])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Candidate {
    Naive,
    Arima(ArimaSpec),
}

impl fmt::Display for Candidate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Candidate::Naive => f.write_str("naive"),
            Candidate::Arima(spec) => spec.fmt(f),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateScore {
    pub candidate: Candidate,
    pub nrmse: f64,
    /// `None` when the validation targets have zero spread.
    pub r_squared: Option<f64>,
    /// Series that could not be fitted and were predicted naively.
    pub fallbacks: Vec<OdPair>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionReport {
    /// Naive first, then the candidates in the order given.
    pub rows: Vec<CandidateScore>,
    pub winner: Candidate,
    pub validation_intervals: usize,
}

impl SelectionReport {
    pub fn winner_score(&self) -> &CandidateScore {
        self.rows
            .iter()
            .find(|r| r.candidate == self.winner)
            .expect("winner is one of the rows")
    }

    pub fn naive_score(&self) -> &CandidateScore {
        &self.rows[0]
    }
}

/// Pooled NRMSE, with all-zero targets and predictions scored as exact.
fn pooled_nrmse(actual: &[f64], predicted: &[f64]) -> Result<f64, ForecastError> {
    match nrmse(actual, predicted) {
        Ok(v) => Ok(v),
        Err(MetricsError::DegenerateDenominator) => Ok(0.0),
        Err(e) => Err(e.into()),
    }
}

fn predict(candidate: Candidate, train: &[f64], steps: usize) -> Result<Vec<f64>, ForecastError> {
    match candidate {
        Candidate::Naive => naive_forecast(train, steps),
        Candidate::Arima(spec) => forecast(&fit_arima(train, spec)?, train, steps),
    }
}

/// Scores each candidate on the last `validation_intervals` of every series,
/// pooling all validation points of the fleet into one NRMSE.
pub fn select_model(
    fleet: &[DemandSeries],
    candidates: &[ArimaSpec],
    validation_intervals: usize,
) -> Result<SelectionReport, ForecastError> {
    if fleet.is_empty() {
        return Err(ForecastError::NoSeries);
    }
    if validation_intervals == 0 {
        return Err(ForecastError::InvalidValidation(
            "validation window must cover at least one interval".into(),
        ));
    }
    if let Some(s) = fleet.iter().find(|s| s.values.len() <= validation_intervals) {
        return Err(ForecastError::InvalidValidation(format!(
            "series {}->{} has {} values, not more than the {validation_intervals}-interval validation window",
            s.od_pair.0,
            s.od_pair.1,
            s.values.len()
        )));
    }
    for spec in candidates {
        spec.validate()?;
    }

    let actual: Vec<f64> = fleet
        .iter()
        .flat_map(|s| s.values[s.values.len() - validation_intervals..].iter().copied())
        .collect();

    let all: Vec<Candidate> = std::iter::once(Candidate::Naive)
        .chain(candidates.iter().map(|&s| Candidate::Arima(s)))
        .collect();
    let mut rows = Vec::with_capacity(all.len());
    for candidate in all {
        let per_series: Vec<(Vec<f64>, bool)> = fleet
            .par_iter()
            .map(|s| {
                let train = &s.values[..s.values.len() - validation_intervals];
                match predict(candidate, train, validation_intervals) {
                    Ok(p) => Ok((p, false)),
                    Err(_) => naive_forecast(train, validation_intervals).map(|p| (p, true)),
                }
            })
            .collect::<Result<_, ForecastError>>()?;
        let fallbacks = fleet
            .iter()
            .zip(&per_series)
            .filter(|(_, (_, fell_back))| *fell_back)
            .map(|(s, _)| s.od_pair)
            .collect();
        let predicted: Vec<f64> = per_series.into_iter().flat_map(|(p, _)| p).collect();
        rows.push(CandidateScore {
            candidate,
            nrmse: pooled_nrmse(&actual, &predicted)?,
            r_squared: r_squared(&actual, &predicted).ok(),
            fallbacks,
        });
    }
    let winner = rows
        .iter()
        .fold(None::<&CandidateScore>, |best, r| match best {
            Some(b) if b.nrmse <= r.nrmse => Some(b),
            _ => Some(r),
        })
        .map(|r| r.candidate)
        .expect("naive row always present");
    Ok(SelectionReport {
        rows,
        winner,
        validation_intervals,
    })
}

/// Per-pair models sharing one specification.
#[derive(Debug, Clone, PartialEq)]
pub struct FleetFit {
    pub spec: ArimaSpec,
    pub models: BTreeMap<OdPair, ArimaModel>,
    /// Pairs whose fit failed; they are forecast naively.
    pub failures: BTreeMap<OdPair, ForecastError>,
}

impl FleetFit {
    /// Forecasts every series of `fleet` from its full history.
    pub fn forecast(
        &self,
        fleet: &[DemandSeries],
        steps: usize,
    ) -> Result<BTreeMap<OdPair, Vec<f64>>, ForecastError> {
        fleet
            .par_iter()
            .map(|s| {
                let values = match self.models.get(&s.od_pair) {
                    Some(model) => forecast(model, &s.values, steps)
                        .or_else(|_| naive_forecast(&s.values, steps))?,
                    None => naive_forecast(&s.values, steps)?,
                };
                Ok((s.od_pair, values))
            })
            .collect()
    }
}

/// Fits `spec` to every series independently.
pub fn fit_fleet(fleet: &[DemandSeries], spec: ArimaSpec) -> Result<FleetFit, ForecastError> {
    spec.validate()?;
    let mut seen = std::collections::BTreeSet::new();
    if let Some(dup) = fleet.iter().find(|s| !seen.insert(s.od_pair)) {
        return Err(ForecastError::DuplicatePair(dup.od_pair.0, dup.od_pair.1));
    }
    let fits: Vec<(OdPair, Result<ArimaModel, ForecastError>)> = fleet
        .par_iter()
        .map(|s| (s.od_pair, fit_arima(&s.values, spec)))
        .collect();
    let mut models = BTreeMap::new();
    let mut failures = BTreeMap::new();
    for (pair, fit) in fits {
        match fit {
            Ok(m) => {
                models.insert(pair, m);
            }
            Err(e) => {
                failures.insert(pair, e);
            }
        }
    }
    Ok(FleetFit {
        spec,
        models,
        failures,
    })
}
