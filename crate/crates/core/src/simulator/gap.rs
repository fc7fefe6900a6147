use super::{OdMatrixSeries, PathFlowBundle, SimulatorError};
use crate::network::{path_travel_time, time_dependent_shortest_path, LinkTimes, Network};

/// Flow on one used route together with its cost and the cost of the
/// best route for the same OD slice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapTerm {
    pub flow: f64,
    pub cost: f64,
    pub shortest: f64,
}

/// `(sum flow * cost - sum flow * shortest) / sum flow * shortest`; zero when
/// there is no flow.
pub fn relative_gap(terms: &[GapTerm]) -> f64 {
    let (experienced, best) = terms.iter().fold((0.0, 0.0), |(e, b), term| {
        (e + term.flow * term.cost, b + term.flow * term.shortest)
    });
    if best > 0.0 {
        ((experienced - best) / best).max(0.0)
    } else {
        0.0
    }
}

/// Gap terms of every used route under `times`, each route costed from the
/// start of its departure interval.
pub(crate) fn gap_terms(
    network: &Network,
    demand: &OdMatrixSeries,
    path_flows: &PathFlowBundle,
    times: &LinkTimes,
) -> Result<Vec<GapTerm>, SimulatorError> {
    let grid = demand.grid();
    let mut terms = Vec::new();
    for (pair, &(o, d)) in demand.pairs().iter().enumerate() {
        let (oi, di) = (network.zone_idx(o)?, network.zone_idx(d)?);
        for t in 0..grid.num_intervals {
            let trips = demand.get(pair, t);
            if trips <= 0.0 {
                continue;
            }
            let shortest = time_dependent_shortest_path(network, times, oi, di, t)?.travel_time();
            let departure = grid.interval_start(t);
            for path in path_flows.paths(pair, t) {
                if path.share > 0.0 {
                    terms.push(GapTerm {
                        flow: trips * path.share,
                        cost: path_travel_time(&path.links, times, departure),
                        shortest,
                    });
                }
            }
        }
    }
    Ok(terms)
}
