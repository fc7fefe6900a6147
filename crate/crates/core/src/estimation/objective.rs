use std::collections::BTreeMap;

use super::{EstimationError, LinkCountSeries};
use crate::linalg::Dense;
use crate::simulator::{AssignmentProportions, OdMatrixSeries};

/// One observed (link, interval) equation `sum_j p_j x_j = observed`.
#[derive(Debug, Clone, PartialEq)]
struct Row {
    observed: f64,
    terms: Vec<(usize, f64)>,
}

/// The count equations restricted to observed link-intervals, as a sparse
/// matrix over the pair-major demand unknowns.
#[derive(Debug, Clone, PartialEq)]
pub struct CountSystem {
    num_unknowns: usize,
    rows: Vec<Row>,
}

/// The two sums of squares, before weighting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveTerms {
    /// `sum (x - prior)^2`
    pub demand: f64,
    /// `sum over observed (P x - counts)^2`
    pub count: f64,
}

impl ObjectiveTerms {
    pub fn weighted(&self, omega: f64) -> f64 {
        omega * self.demand + (1.0 - omega) * self.count
    }
}

impl CountSystem {
    pub fn build(
        proportions: &AssignmentProportions,
        counts: &LinkCountSeries,
        num_pairs: usize,
        num_intervals: usize,
    ) -> Result<CountSystem, EstimationError> {
        if counts.grid().num_intervals != num_intervals {
            return Err(EstimationError::DimensionMismatch {
                what: "count intervals",
                expected: num_intervals,
                found: counts.grid().num_intervals,
            });
        }
        let index: BTreeMap<(usize, usize), usize> = counts
            .entries()
            .keys()
            .enumerate()
            .map(|(r, &key)| (key, r))
            .collect();
        let mut rows: Vec<Row> = counts
            .entries()
            .values()
            .map(|&observed| Row {
                observed,
                terms: Vec::new(),
            })
            .collect();
        for e in proportions.entries() {
            if e.pair >= num_pairs {
                return Err(EstimationError::DimensionMismatch {
                    what: "proportion OD index",
                    expected: num_pairs,
                    found: e.pair + 1,
                });
            }
            if e.departure >= num_intervals || e.crossing >= num_intervals {
                return Err(EstimationError::DimensionMismatch {
                    what: "proportion interval",
                    expected: num_intervals,
                    found: e.departure.max(e.crossing) + 1,
                });
            }
            if e.value == 0.0 {
                continue;
            }
            if let Some(&r) = index.get(&(e.link, e.crossing)) {
                rows[r].terms.push((e.pair * num_intervals + e.departure, e.value));
            }
        }
        Ok(CountSystem {
            num_unknowns: num_pairs * num_intervals,
            rows,
        })
    }

    pub fn num_unknowns(&self) -> usize {
        self.num_unknowns
    }

    pub fn num_equations(&self) -> usize {
        self.rows.len()
    }

    pub fn observed(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.observed).collect()
    }

    /// `P x` over the observed equations.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| r.terms.iter().map(|&(j, p)| p * x[j]).sum())
            .collect()
    }

    /// `P^T r`.
    pub fn apply_transpose(&self, r: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.num_unknowns];
        for (row, &ri) in self.rows.iter().zip(r) {
            for &(j, p) in &row.terms {
                out[j] += p * ri;
            }
        }
        out
    }

    pub fn to_dense(&self) -> Dense {
        let mut m = Dense::zeros(self.rows.len(), self.num_unknowns);
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, p) in &row.terms {
                m.add(i, j, p);
            }
        }
        m
    }

    fn check(&self, x: &[f64], prior: &[f64]) -> Result<(), EstimationError> {
        for (what, v) in [("demand", x), ("prior demand", prior)] {
            if v.len() != self.num_unknowns {
                return Err(EstimationError::DimensionMismatch {
                    what,
                    expected: self.num_unknowns,
                    found: v.len(),
                });
            }
        }
        Ok(())
    }

    pub fn terms(&self, x: &[f64], prior: &[f64]) -> Result<ObjectiveTerms, EstimationError> {
        self.check(x, prior)?;
        Ok(self.terms_unchecked(x, prior))
    }

    pub(super) fn terms_unchecked(&self, x: &[f64], prior: &[f64]) -> ObjectiveTerms {
        let demand = x.iter().zip(prior).map(|(a, b)| (a - b).powi(2)).sum();
        let count = self
            .apply(x)
            .iter()
            .zip(&self.rows)
            .map(|(y, r)| (y - r.observed).powi(2))
            .sum();
        ObjectiveTerms { demand, count }
    }

    pub fn objective(&self, x: &[f64], prior: &[f64], omega: f64) -> Result<f64, EstimationError> {
        Ok(self.terms(x, prior)?.weighted(omega))
    }

    /// `2 omega (x - prior) + 2 (1 - omega) P^T (P x - counts)`.
    pub fn gradient(&self, x: &[f64], prior: &[f64], omega: f64) -> Result<Vec<f64>, EstimationError> {
        self.check(x, prior)?;
        Ok(self.gradient_unchecked(x, prior, omega))
    }

    pub(super) fn gradient_unchecked(&self, x: &[f64], prior: &[f64], omega: f64) -> Vec<f64> {
        let residual: Vec<f64> = self
            .apply(x)
            .iter()
            .zip(&self.rows)
            .map(|(y, r)| y - r.observed)
            .collect();
        let back = self.apply_transpose(&residual);
        x.iter()
            .zip(prior)
            .zip(back)
            .map(|((xi, pi), bi)| 2.0 * omega * (xi - pi) + 2.0 * (1.0 - omega) * bi)
            .collect()
    }
}

fn system_for(
    x: &OdMatrixSeries,
    prior: &OdMatrixSeries,
    proportions: &AssignmentProportions,
    counts: &LinkCountSeries,
) -> Result<CountSystem, EstimationError> {
    if x.num_pairs() != prior.num_pairs() || x.num_intervals() != prior.num_intervals() {
        return Err(EstimationError::DimensionMismatch {
            what: "demand shape",
            expected: prior.values().len(),
            found: x.values().len(),
        });
    }
    CountSystem::build(proportions, counts, x.num_pairs(), x.num_intervals())
}

/// Unweighted demand and count sums of squares at `x`.
pub fn objective_terms(
    x: &OdMatrixSeries,
    prior: &OdMatrixSeries,
    proportions: &AssignmentProportions,
    counts: &LinkCountSeries,
) -> Result<ObjectiveTerms, EstimationError> {
    system_for(x, prior, proportions, counts)?.terms(x.values(), prior.values())
}

pub fn objective_value(
    x: &OdMatrixSeries,
    prior: &OdMatrixSeries,
    proportions: &AssignmentProportions,
    counts: &LinkCountSeries,
    omega: f64,
) -> Result<f64, EstimationError> {
    Ok(objective_terms(x, prior, proportions, counts)?.weighted(omega))
}

/// Gradient over the pair-major unknowns.
pub fn objective_gradient(
    x: &OdMatrixSeries,
    prior: &OdMatrixSeries,
    proportions: &AssignmentProportions,
    counts: &LinkCountSeries,
    omega: f64,
) -> Result<Vec<f64>, EstimationError> {
    system_for(x, prior, proportions, counts)?.gradient(x.values(), prior.values(), omega)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{TimeGrid, ZoneId};
    use crate::simulator::ProportionEntry;
    use proptest::prelude::*;

    fn one_by_one(x: f64, prior: f64, count: f64) -> (OdMatrixSeries, OdMatrixSeries, AssignmentProportions, LinkCountSeries) {
        let grid = TimeGrid::new(0.0, 900.0, 1);
        let pairs = vec![(ZoneId(1), ZoneId(2))];
        let xs = OdMatrixSeries::from_values(grid, pairs.clone(), vec![x]).unwrap();
        let ps = OdMatrixSeries::from_values(grid, pairs, vec![prior]).unwrap();
        let p = AssignmentProportions::from_entries(vec![ProportionEntry {
            link: 0,
            pair: 0,
            crossing: 0,
            departure: 0,
            value: 1.0,
        }]);
        let mut c = LinkCountSeries::new(grid);
        c.insert(0, 0, count).unwrap();
        (xs, ps, p, c)
    }

    #[test]
    fn hand_example_value_and_gradient() {
        let (x, prior, p, c) = one_by_one(90.0, 80.0, 100.0);
        assert_eq!(objective_value(&x, &prior, &p, &c, 0.5).unwrap(), 100.0);
        assert_eq!(objective_gradient(&x, &prior, &p, &c, 0.5).unwrap(), vec![0.0]);
    }

    #[test]
    fn trivial_zeros() {
        let (x, prior, p, c) = one_by_one(80.0, 80.0, 80.0);
        assert_eq!(objective_value(&x, &prior, &p, &c, 0.3).unwrap(), 0.0);
        let (x, prior, p, c) = one_by_one(80.0, 80.0, 12.0);
        assert_eq!(objective_value(&x, &prior, &p, &c, 1.0).unwrap(), 0.0);
        // Pure demand term: gradient 2 * delta.
        let (x, prior, p, c) = one_by_one(83.5, 80.0, 12.0);
        assert_eq!(objective_gradient(&x, &prior, &p, &c, 1.0).unwrap(), vec![7.0]);
    }

    #[test]
    fn unobserved_links_are_ignored() {
        let (x, prior, _, c) = one_by_one(90.0, 80.0, 100.0);
        let p = AssignmentProportions::from_entries(vec![ProportionEntry {
            link: 3,
            pair: 0,
            crossing: 0,
            departure: 0,
            value: 1.0,
        }]);
        // Link 0 is counted but nobody uses it: residual is the full count.
        assert_eq!(objective_value(&x, &prior, &p, &c, 0.5).unwrap(), 0.5 * 100.0 + 0.5 * 10000.0);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let (x, _, p, c) = one_by_one(90.0, 80.0, 100.0);
        let grid = TimeGrid::new(0.0, 900.0, 2);
        let prior = OdMatrixSeries::zeros(grid, vec![(ZoneId(1), ZoneId(2))]);
        assert!(matches!(
            objective_value(&x, &prior, &p, &c, 0.5),
            Err(EstimationError::DimensionMismatch { .. })
        ));
    }

    proptest! {
        #[test]
        fn gradient_matches_central_differences(
            omega in 0.0f64..=1.0,
            x in proptest::collection::vec(0.0f64..50.0, 4),
            prior in proptest::collection::vec(0.0f64..50.0, 4),
            p in proptest::collection::vec(0.0f64..1.0, 12),
            y in proptest::collection::vec(0.0f64..80.0, 3),
        ) {
            let rows = (0..3)
                .map(|i| Row { observed: y[i], terms: (0..4).map(|j| (j, p[i * 4 + j])).collect() })
                .collect();
            let sys = CountSystem { num_unknowns: 4, rows };
            let g = sys.gradient(&x, &prior, omega).unwrap();
            for j in 0..4 {
                let h = 1e-5;
                let mut up = x.clone();
                let mut dn = x.clone();
                up[j] += h;
                dn[j] -= h;
                let fd = (sys.objective(&up, &prior, omega).unwrap() - sys.objective(&dn, &prior, omega).unwrap()) / (2.0 * h);
                prop_assert!((fd - g[j]).abs() <= 1e-4 * g[j].abs().max(1.0));
            }
        }
    }
}
