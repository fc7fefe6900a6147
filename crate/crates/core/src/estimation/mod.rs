//! Bi-level OD estimation: a bound-constrained least-squares update of the
//! demand under fixed assignment proportions, alternated with re-simulation
//! until the link-flow R² settles.

mod bilevel;
mod objective;
mod upper;

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::metrics::{MeanMode, MetricsError};
use crate::network::{Network, TimeGrid};
use crate::simulator::{AssignConfig, SimulatorError};

pub use bilevel::{bilevel_estimate, EstimationResult, StopReason, TraceRow};
pub use objective::{objective_gradient, objective_terms, objective_value, CountSystem, ObjectiveTerms};
pub use upper::{upper_level_solve, UpperLevelSolution};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimationError {
    #[error(transparent)]
    Simulator(#[from] SimulatorError),
    #[error("fit measure: {0}")]
    Metrics(#[from] MetricsError),
    #[error("{what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("invalid estimation configuration: {0}")]
    Config(String),
    #[error("count {value} for link index {link}, interval {interval} is negative or not finite")]
    InvalidCount { link: usize, interval: usize, value: f64 },
    #[error("count interval {interval} is outside the {num_intervals}-interval grid")]
    CountInterval { interval: usize, num_intervals: usize },
    #[error("counts reference link index {0}, which the network does not have")]
    UnknownLink(usize),
    #[error("no link counts supplied")]
    NoCounts,
}

/// Observed vehicles entering link `a` during interval `h`.
///
/// Links are internal network indices; intervals are 0-based.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkCountSeries {
    grid: TimeGrid,
    entries: BTreeMap<(usize, usize), f64>,
}

impl LinkCountSeries {
    pub fn new(grid: TimeGrid) -> Self {
        LinkCountSeries {
            grid,
            entries: BTreeMap::new(),
        }
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    /// Adds or replaces one observation.
    pub fn insert(&mut self, link: usize, interval: usize, value: f64) -> Result<(), EstimationError> {
        if interval >= self.grid.num_intervals {
            return Err(EstimationError::CountInterval {
                interval,
                num_intervals: self.grid.num_intervals,
            });
        }
        if !(value >= 0.0) || !value.is_finite() {
            return Err(EstimationError::InvalidCount { link, interval, value });
        }
        self.entries.insert((link, interval), value);
        Ok(())
    }

    pub fn entries(&self) -> &BTreeMap<(usize, usize), f64> {
        &self.entries
    }

    pub fn get(&self, link: usize, interval: usize) -> Option<f64> {
        self.entries.get(&(link, interval)).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// The set of links with at least one observation.
    pub fn observed_links(&self) -> BTreeSet<usize> {
        self.entries.keys().map(|&(a, _)| a).collect()
    }

    /// Observed values in entry order.
    pub fn values(&self) -> Vec<f64> {
        self.entries.values().copied().collect()
    }

    pub fn validate(&self, network: &Network) -> Result<(), EstimationError> {
        if let Some(&(link, _)) = self.entries.keys().find(|&&(a, _)| a >= network.num_links()) {
            return Err(EstimationError::UnknownLink(link));
        }
        Ok(())
    }

    /// Counts taken from simulated entry flows on the given links, every
    /// interval.
    pub fn from_flows(flows: &[f64], grid: TimeGrid, links: impl IntoIterator<Item = usize>) -> Self {
        let t = grid.num_intervals;
        let entries = links
            .into_iter()
            .flat_map(|a| (0..t).map(move |h| (a, h)))
            .map(|(a, h)| ((a, h), flows[a * t + h]))
            .collect();
        LinkCountSeries { grid, entries }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimationConfig {
    /// Reliability weight on the prior demand, in `[0, 1]`.
    pub omega: f64,
    pub max_outer_iterations: usize,
    pub r2_variation_tolerance: f64,
    pub max_gradient_steps: usize,
    /// Bound on the largest component of the projected gradient step
    /// `x - max(0, x - grad)` at which the upper level stops.
    pub step_tolerance: f64,
    /// Share of released vehicles still travelling at the horizon above
    /// which an iteration counts as gridlocked.
    pub gridlock_share: f64,
    pub r2_mode: MeanMode,
    pub assignment: AssignConfig,
}

impl Default for EstimationConfig {
    fn default() -> Self {
        EstimationConfig {
            omega: 0.9,
            max_outer_iterations: 20,
            r2_variation_tolerance: 1e-3,
            max_gradient_steps: 10_000,
            step_tolerance: 1e-9,
            gridlock_share: 0.1,
            r2_mode: MeanMode::Simulated,
            assignment: AssignConfig::default(),
        }
    }
}

impl EstimationConfig {
    pub fn validate(&self) -> Result<(), EstimationError> {
        let bad = |m: &str| Err(EstimationError::Config(m.to_string()));
        if !(0.0..=1.0).contains(&self.omega) {
            return bad("omega must lie in [0, 1]");
        }
        if self.max_outer_iterations == 0 {
            return bad("max_outer_iterations must be at least 1");
        }
        if !(self.r2_variation_tolerance > 0.0) {
            return bad("r2_variation_tolerance must be positive");
        }
        if self.max_gradient_steps == 0 {
            return bad("max_gradient_steps must be at least 1");
        }
        if !(self.step_tolerance >= 0.0) {
            return bad("step_tolerance must be nonnegative");
        }
        if !(0.0..=1.0).contains(&self.gridlock_share) {
            return bad("gridlock_share must lie in [0, 1]");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_reject_bad_values() {
        let grid = TimeGrid::new(0.0, 900.0, 2);
        let mut c = LinkCountSeries::new(grid);
        assert!(c.insert(0, 1, 5.0).is_ok());
        assert!(matches!(c.insert(0, 2, 5.0), Err(EstimationError::CountInterval { .. })));
        assert!(matches!(c.insert(0, 0, -1.0), Err(EstimationError::InvalidCount { .. })));
        assert!(matches!(c.insert(0, 0, f64::NAN), Err(EstimationError::InvalidCount { .. })));
        assert_eq!(c.len(), 1);
        assert_eq!(c.observed_links().into_iter().collect::<Vec<_>>(), vec![0]);
    }

    #[test]
    fn config_bounds() {
        assert!(EstimationConfig::default().validate().is_ok());
        for omega in [-0.1, 1.1, f64::NAN] {
            let cfg = EstimationConfig { omega, ..Default::default() };
            assert!(matches!(cfg.validate(), Err(EstimationError::Config(_))));
        }
        let cfg = EstimationConfig { max_outer_iterations: 0, ..Default::default() };
        assert!(cfg.validate().is_err());
    }
}
