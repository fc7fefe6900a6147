use super::objective::CountSystem;
use super::{EstimationConfig, EstimationError, LinkCountSeries};
use crate::linalg;
use crate::simulator::{AssignmentProportions, OdMatrixSeries};

const ARMIJO: f64 = 1e-4;
const MIN_STEP: f64 = 1e-20;

#[derive(Debug, Clone, PartialEq)]
pub struct UpperLevelSolution {
    pub demand: OdMatrixSeries,
    /// Accepted gradient steps.
    pub steps: usize,
    /// Objective before the first step and after every accepted step.
    pub objective_history: Vec<f64>,
    /// Largest component of `x - max(0, x - grad)` at the returned point.
    pub projected_gradient: f64,
    /// `omega = 0` with fewer independent count equations than unknowns:
    /// the returned minimizer is the one reached from the prior, not the
    /// only one.
    pub non_unique: bool,
}

/// Minimizes the weighted objective over `x >= 0` with the proportions held
/// fixed, starting from the prior.
pub fn upper_level_solve(
    proportions: &AssignmentProportions,
    prior: &OdMatrixSeries,
    counts: &LinkCountSeries,
    config: &EstimationConfig,
) -> Result<UpperLevelSolution, EstimationError> {
    config.validate()?;
    let system = CountSystem::build(proportions, counts, prior.num_pairs(), prior.num_intervals())?;
    solve_system(&system, prior, config)
}

pub(super) fn solve_system(
    system: &CountSystem,
    prior: &OdMatrixSeries,
    config: &EstimationConfig,
) -> Result<UpperLevelSolution, EstimationError> {
    let omega = config.omega;
    let x0 = prior.values();
    system.terms(x0, x0)?;

    let mut x = x0.to_vec();
    let mut f = system.terms_unchecked(&x, x0).weighted(omega);
    let mut history = vec![f];
    let mut steps = 0;
    let mut pg;
    loop {
        let g = system.gradient_unchecked(&x, x0, omega);
        pg = x
            .iter()
            .zip(&g)
            .map(|(xi, gi)| (xi - (xi - gi).max(0.0)).abs())
            .fold(0.0, f64::max);
        if pg <= config.step_tolerance || steps >= config.max_gradient_steps {
            break;
        }
        let mut alpha = 1.0;
        let accepted = loop {
            let cand: Vec<f64> = x.iter().zip(&g).map(|(xi, gi)| (xi - alpha * gi).max(0.0)).collect();
            let decrease: f64 = g.iter().zip(&cand).zip(&x).map(|((gi, c), xi)| gi * (c - xi)).sum();
            let fc = system.terms_unchecked(&cand, x0).weighted(omega);
            if fc <= f + ARMIJO * decrease {
                break Some((cand, fc));
            }
            alpha *= 0.5;
            if alpha < MIN_STEP {
                break None;
            }
        };
        match accepted {
            Some((cand, fc)) if cand != x => {
                x = cand;
                f = fc;
                steps += 1;
                history.push(f);
            }
            _ => break,
        }
    }

    let non_unique = omega == 0.0
        && system.num_unknowns() > 0
        && linalg::rank(&system.to_dense(), 1e-10) < system.num_unknowns();

    Ok(UpperLevelSolution {
        demand: prior.with_values(x)?,
        steps,
        objective_history: history,
        projected_gradient: pg,
        non_unique,
    })
}
