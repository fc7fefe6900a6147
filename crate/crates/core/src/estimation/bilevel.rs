use log::{info, warn};

use super::objective::{CountSystem, ObjectiveTerms};
use super::upper::solve_system;
use super::{EstimationConfig, EstimationError, LinkCountSeries};
use crate::metrics::r_squared_with;
use crate::network::Network;
use crate::simulator::{assign, OdMatrixSeries, SimulationResult};

/// One outer iteration: the demand `x_k` was simulated, scored and then
/// handed to the upper level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    /// 1-based.
    pub iteration: usize,
    /// Weighted objective of `x_k` under the proportions of its own
    /// simulation.
    pub objective: f64,
    pub terms: ObjectiveTerms,
    pub r_squared: f64,
    /// Gradient steps the upper level took from this iteration's
    /// proportions; 0 on the final row.
    pub upper_steps: usize,
    pub vehicles_unfinished: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// `|R²_k - R²_{k-1}|` fell below the tolerance.
    R2Settled,
    /// The upper level returned its input unchanged.
    FixedPoint,
    MaxIterations,
}

#[derive(Debug, Clone)]
pub struct EstimationResult {
    /// Demand of the best-R² iterate.
    pub estimated_demand: OdMatrixSeries,
    /// 1-based iteration the estimate comes from.
    pub best_iteration: usize,
    pub trace: Vec<TraceRow>,
    /// Simulation of `estimated_demand`.
    pub final_simulation: SimulationResult,
    /// Simulation of the prior (first iteration).
    pub initial_simulation: SimulationResult,
    pub stop_reason: StopReason,
    /// Some iteration left more than the configured share of vehicles in
    /// the network at the horizon.
    pub gridlock: bool,
    pub non_unique: bool,
}

impl EstimationResult {
    pub fn best_r_squared(&self) -> f64 {
        self.trace[self.best_iteration - 1].r_squared
    }

    pub fn final_objective(&self) -> f64 {
        self.trace.last().map(|r| r.objective).unwrap_or(0.0)
    }
}

/// Alternates simulation and upper-level updates, starting from the prior.
pub fn bilevel_estimate(
    network: &Network,
    prior: &OdMatrixSeries,
    counts: &LinkCountSeries,
    config: &EstimationConfig,
) -> Result<EstimationResult, EstimationError> {
    config.validate()?;
    if counts.is_empty() {
        return Err(EstimationError::NoCounts);
    }
    counts.validate(network)?;
    if counts.grid() != prior.grid() {
        return Err(EstimationError::DimensionMismatch {
            what: "count intervals",
            expected: prior.num_intervals(),
            found: counts.grid().num_intervals,
        });
    }
    let observed = counts.values();

    let mut x = prior.clone();
    let mut trace: Vec<TraceRow> = Vec::new();
    let mut best: Option<(usize, OdMatrixSeries, SimulationResult)> = None;
    let mut initial: Option<SimulationResult> = None;
    let mut gridlock = false;
    let mut non_unique = false;
    let mut k = 1;
    let stop_reason = loop {
        let sim = assign(network, &x, &config.assignment)?;
        let simulated: Vec<f64> = counts
            .entries()
            .keys()
            .map(|&(a, h)| sim.link_flow(a, h))
            .collect();
        let r2 = r_squared_with(&observed, &simulated, config.r2_mode)?;
        let system = CountSystem::build(&sim.proportions, counts, x.num_pairs(), x.num_intervals())?;
        let terms = system.terms(x.values(), prior.values())?;
        if sim.is_gridlocked(config.gridlock_share) {
            warn!(
                "iteration {k}: {:.1} of {:.1} vehicles unfinished at the horizon",
                sim.vehicles_unfinished, sim.vehicles_released
            );
            gridlock = true;
        }
        info!("iteration {k}: objective {:.6e}, R2 {r2:.6}", terms.weighted(config.omega));
        let previous = trace.last().map(|r| r.r_squared);
        trace.push(TraceRow {
            iteration: k,
            objective: terms.weighted(config.omega),
            terms,
            r_squared: r2,
            upper_steps: 0,
            vehicles_unfinished: sim.vehicles_unfinished,
        });
        if initial.is_none() {
            initial = Some(sim.clone());
        }
        if best.as_ref().map_or(true, |(i, _, _)| r2 > trace[*i - 1].r_squared) {
            best = Some((k, x.clone(), sim));
        }

        if previous.is_some_and(|p| (r2 - p).abs() < config.r2_variation_tolerance) {
            break StopReason::R2Settled;
        }
        if k >= config.max_outer_iterations {
            break StopReason::MaxIterations;
        }
        let solution = solve_system(&system, prior, config)?;
        non_unique |= solution.non_unique;
        trace.last_mut().unwrap().upper_steps = solution.steps;
        if solution.demand == x {
            break StopReason::FixedPoint;
        }
        x = solution.demand;
        k += 1;
    };

    let (best_iteration, estimated_demand, final_simulation) = best.expect("at least one iteration");
    Ok(EstimationResult {
        estimated_demand,
        best_iteration,
        trace,
        final_simulation,
        initial_simulation: initial.expect("at least one iteration"),
        stop_reason,
        gridlock,
        non_unique,
    })
}
