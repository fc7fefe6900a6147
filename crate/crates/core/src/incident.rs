//! Time-bounded capacity cuts replayed on a demand matrix and compared with
//! the undisturbed run.

use std::path::Path;

use rayon::prelude::*;
use thiserror::Error;

use crate::csvio::{fmt_f64, CsvError, CsvSink, INCIDENT_HEADER};
use crate::network::{CapacityWindow, LinkId, Network, NetworkError, TimeGrid};
use crate::simulator::{assign, AssignConfig, OdMatrixSeries, SimulationResult, SimulatorError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IncidentError {
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Simulator(#[from] SimulatorError),
    #[error("invalid incident scenario {name:?}: {reason}")]
    InvalidScenario { name: String, reason: String },
    #[error("duration sweep needs at least one positive duration")]
    NoDurations,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IncidentScenario {
    pub name: String,
    pub link_ids: Vec<LinkId>,
    /// Wall-clock seconds.
    pub start_time: f64,
    pub duration: f64,
    /// Share of capacity that remains during the incident.
    pub capacity_factor: f64,
    pub lanes_blocked: u32,
}

impl IncidentScenario {
    /// Blocking `lanes_blocked` of `total_lanes` leaves the proportional
    /// share of capacity.
    pub fn from_lanes(
        name: impl Into<String>,
        link_ids: Vec<LinkId>,
        start_time: f64,
        duration: f64,
        lanes_blocked: u32,
        total_lanes: u32,
    ) -> Self {
        let remaining = total_lanes.saturating_sub(lanes_blocked);
        IncidentScenario {
            name: name.into(),
            link_ids,
            start_time,
            duration,
            capacity_factor: if total_lanes == 0 {
                0.0
            } else {
                f64::from(remaining) / f64::from(total_lanes)
            },
            lanes_blocked,
        }
    }

    pub fn end_time(&self) -> f64 {
        self.start_time + self.duration
    }

    pub fn validate(&self, grid: &TimeGrid) -> Result<(), IncidentError> {
        let fail = |reason: &str| {
            Err(IncidentError::InvalidScenario {
                name: self.name.clone(),
                reason: reason.to_string(),
            })
        };
        if self.link_ids.is_empty() {
            return fail("no affected links");
        }
        if !(self.duration > 0.0) || !self.duration.is_finite() {
            return fail("duration must be positive");
        }
        if !(0.0..=1.0).contains(&self.capacity_factor) {
            return fail("capacity factor must lie in [0, 1]");
        }
        if !self.start_time.is_finite() || self.start_time >= grid.end() || self.end_time() <= grid.start {
            return fail("incident window does not overlap the simulation horizon");
        }
        Ok(())
    }
}

/// Copy of `network` with the scenario's capacity window on every affected
/// link.
pub fn apply_incident(network: &Network, scenario: &IncidentScenario) -> Result<Network, IncidentError> {
    let window = CapacityWindow {
        start: scenario.start_time,
        end: scenario.end_time(),
        factor: scenario.capacity_factor,
    };
    let mut out = network.clone();
    for &id in &scenario.link_ids {
        let idx = network.link_idx(id)?;
        out = out.with_capacity_window(idx, window);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioOutcome {
    /// `None` for the baseline.
    pub scenario: Option<IncidentScenario>,
    /// Vehicles per hour leaving the watched link in each interval.
    pub watched_link_throughput: Vec<f64>,
    /// Seconds of delay per released vehicle.
    pub average_delay: f64,
    pub total_travel_time: f64,
    pub total_delay: f64,
    pub vehicles_unfinished: f64,
    pub gridlocked: bool,
}

impl ScenarioOutcome {
    fn from_result(
        scenario: Option<IncidentScenario>,
        result: &SimulationResult,
        watched: usize,
        gridlock_share: f64,
    ) -> Self {
        let grid = result.grid;
        let scale = 3600.0 / grid.interval_length;
        ScenarioOutcome {
            scenario,
            watched_link_throughput: (0..grid.num_intervals)
                .map(|h| result.link_outflow(watched, h) * scale)
                .collect(),
            average_delay: result.average_delay(),
            total_travel_time: result.total_travel_time,
            total_delay: result.total_delay,
            vehicles_unfinished: result.vehicles_unfinished,
            gridlocked: result.is_gridlocked(gridlock_share),
        }
    }

    pub fn min_throughput(&self) -> f64 {
        self.watched_link_throughput
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IncidentConfig {
    pub assignment: AssignConfig,
    pub gridlock_share: f64,
}

impl Default for IncidentConfig {
    fn default() -> Self {
        IncidentConfig {
            assignment: AssignConfig::default(),
            gridlock_share: 0.1,
        }
    }
}

/// Baseline first, then one outcome per scenario in input order.
pub fn run_incident_analysis(
    network: &Network,
    demand: &OdMatrixSeries,
    scenarios: &[IncidentScenario],
    watched_link: LinkId,
    config: &IncidentConfig,
) -> Result<Vec<ScenarioOutcome>, IncidentError> {
    let watched = network.link_idx(watched_link)?;
    let grid = demand.grid();
    for s in scenarios {
        s.validate(&grid)?;
    }
    let disturbed: Vec<Network> = scenarios
        .iter()
        .map(|s| apply_incident(network, s))
        .collect::<Result<_, _>>()?;

    let baseline = assign(network, demand, &config.assignment)?;
    let mut outcomes = vec![ScenarioOutcome::from_result(None, &baseline, watched, config.gridlock_share)];
    let runs: Vec<ScenarioOutcome> = scenarios
        .par_iter()
        .zip(disturbed.par_iter())
        .map(|(s, net)| {
            let result = assign(net, demand, &config.assignment)?;
            Ok(ScenarioOutcome::from_result(
                Some(s.clone()),
                &result,
                watched,
                config.gridlock_share,
            ))
        })
        .collect::<Result<_, IncidentError>>()?;
    outcomes.extend(runs);
    Ok(outcomes)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub duration: f64,
    pub outcome: ScenarioOutcome,
    pub delay_ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub baseline: ScenarioOutcome,
    pub rows: Vec<SweepRow>,
}

/// Average delay relative to the baseline; two zero delays compare as 1.
pub fn delay_ratio(scenario: f64, baseline: f64) -> f64 {
    if baseline > 0.0 {
        scenario / baseline
    } else if scenario > 0.0 {
        f64::INFINITY
    } else {
        1.0
    }
}

/// Runs `template` once per duration.
pub fn duration_sweep(
    network: &Network,
    demand: &OdMatrixSeries,
    template: &IncidentScenario,
    durations: &[f64],
    watched_link: LinkId,
    config: &IncidentConfig,
) -> Result<SweepTable, IncidentError> {
    if durations.is_empty() || durations.iter().any(|d| !(*d > 0.0)) {
        return Err(IncidentError::NoDurations);
    }
    let scenarios: Vec<IncidentScenario> = durations
        .iter()
        .map(|&d| IncidentScenario {
            name: format!("{}_{}s", template.name, fmt_f64(d)),
            duration: d,
            ..template.clone()
        })
        .collect();
    let mut outcomes = run_incident_analysis(network, demand, &scenarios, watched_link, config)?.into_iter();
    let baseline = outcomes.next().expect("baseline outcome");
    let rows = durations
        .iter()
        .zip(outcomes)
        .map(|(&duration, outcome)| SweepRow {
            duration,
            delay_ratio: delay_ratio(outcome.average_delay, baseline.average_delay),
            outcome,
        })
        .collect();
    Ok(SweepTable { baseline, rows })
}

/// Writes the baseline and one row per scenario outcome.
pub fn write_incident_report(path: &Path, outcomes: &[ScenarioOutcome]) -> Result<(), CsvError> {
    let mut sink = CsvSink::create(path, INCIDENT_HEADER)?;
    let base_delay = outcomes.first().map_or(0.0, |o| o.average_delay);
    for o in outcomes {
        let (name, duration, factor) = match &o.scenario {
            Some(s) => (s.name.clone(), s.duration, s.capacity_factor),
            None => ("baseline".to_string(), 0.0, 1.0),
        };
        sink.row([
            name,
            fmt_f64(duration),
            fmt_f64(factor),
            fmt_f64(o.average_delay),
            fmt_f64(delay_ratio(o.average_delay, base_delay)),
            fmt_f64(o.min_throughput()),
        ])?;
    }
    sink.finish()
}

impl SweepTable {
    /// Baseline followed by the sweep rows.
    pub fn outcomes(&self) -> Vec<ScenarioOutcome> {
        std::iter::once(self.baseline.clone())
            .chain(self.rows.iter().map(|r| r.outcome.clone()))
            .collect()
    }
}
