use super::{dynamic_network_loading, LoadingConfig, OdMatrixSeries, PathFlowBundle, SimulationResult, SimulatorError};
use crate::network::{time_dependent_shortest_path, LinkTimes, Network};

/// Settings of the method-of-successive-averages equilibration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssignConfig {
    pub max_iterations: usize,
    pub gap_tolerance: f64,
    pub loading: LoadingConfig,
}

impl Default for AssignConfig {
    fn default() -> Self {
        AssignConfig {
            max_iterations: 50,
            gap_tolerance: 1e-3,
            loading: LoadingConfig::default(),
        }
    }
}

/// Dynamic user-equilibrium assignment by successive averages.
///
/// Iteration `k` routes every OD slice on the time-dependent shortest path
/// under the previous iteration's experienced link times (free-flow times
/// for `k = 1`), moves a `1/k` share of the slice onto it and reloads. Stops
/// once the relative gap drops below the tolerance or after
/// `max_iterations` loadings.
pub fn assign(
    network: &Network,
    demand: &OdMatrixSeries,
    config: &AssignConfig,
) -> Result<SimulationResult, SimulatorError> {
    if config.max_iterations == 0 {
        return Err(SimulatorError::Config("max_iterations must be at least 1".into()));
    }
    if !(config.gap_tolerance >= 0.0) {
        return Err(SimulatorError::Config("gap_tolerance must be nonnegative".into()));
    }
    network.check_od_pairs(demand.pairs())?;

    let grid = demand.grid();
    let zones: Vec<(usize, usize)> = demand
        .pairs()
        .iter()
        .map(|&(o, d)| Ok((network.zone_idx(o)?, network.zone_idx(d)?)))
        .collect::<Result<_, SimulatorError>>()?;

    let mut times = LinkTimes::free_flow(network, grid);
    let mut bundle = PathFlowBundle::new(demand.num_pairs(), grid.num_intervals);
    let mut k = 1;
    loop {
        let weight = 1.0 / k as f64;
        for (pair, &(o, d)) in zones.iter().enumerate() {
            for t in 0..grid.num_intervals {
                let route = time_dependent_shortest_path(network, &times, o, d, t)?;
                if k == 1 {
                    bundle.set_single(pair, t, route.links);
                } else {
                    bundle.blend_towards(pair, t, &route.links, weight);
                }
            }
        }
        let mut result = dynamic_network_loading(network, &bundle, demand, &config.loading)?;
        result.iterations = k;
        if result.relative_gap < config.gap_tolerance || k >= config.max_iterations {
            return Ok(result);
        }
        times = result.link_times;
        k += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{LinkId, LinkSpec, Node, NodeId, TimeGrid, ZoneId, ZoneSpec};

    /// Two parallel one-link routes, 100 s and 120 s free flow.
    fn parallel(capacity: f64) -> Network {
        let nodes = (1..=3).map(|i| Node { id: NodeId(i), x: i as f64, y: 0.0 }).collect();
        let link = |id, to, ff| LinkSpec {
            id: LinkId(id),
            from: NodeId(1),
            to: NodeId(to),
            free_flow_time: ff,
            capacity,
            lanes: 1,
        };
        let joint = |id, from| LinkSpec {
            id: LinkId(id),
            from: NodeId(from),
            to: NodeId(3),
            free_flow_time: 10.0,
            capacity: 10_000.0,
            lanes: 4,
        };
        Network::new(
            nodes,
            vec![link(1, 2, 100.0), joint(2, 2), link(3, 3, 120.0)],
            vec![ZoneSpec { id: ZoneId(1), node: NodeId(1) }, ZoneSpec { id: ZoneId(3), node: NodeId(3) }],
        )
        .unwrap()
    }

    fn demand(trips: f64) -> OdMatrixSeries {
        let grid = TimeGrid::new(0.0, 900.0, 3);
        OdMatrixSeries::from_values(grid, vec![(ZoneId(1), ZoneId(3))], vec![trips, trips, 0.0]).unwrap()
    }

    #[test]
    fn single_iteration_is_all_or_nothing() {
        let net = parallel(600.0);
        let cfg = AssignConfig { max_iterations: 1, ..Default::default() };
        let r = assign(&net, &demand(400.0), &cfg).unwrap();
        assert_eq!(r.iterations, 1);
        assert!((r.link_flow(0, 0) - 400.0).abs() < 1e-9);
        assert_eq!(r.link_flow(2, 0), 0.0);
        assert!(r.relative_gap > 0.0);
    }

    #[test]
    fn uncongested_network_converges_at_once() {
        let net = parallel(6000.0);
        let r = assign(&net, &demand(100.0), &AssignConfig::default()).unwrap();
        assert_eq!(r.iterations, 1);
        assert_eq!(r.relative_gap, 0.0);
    }

    #[test]
    fn congestion_spreads_flow_and_lowers_gap() {
        let net = parallel(600.0);
        let aon = assign(&net, &demand(400.0), &AssignConfig { max_iterations: 1, ..Default::default() }).unwrap();
        let r = assign(&net, &demand(400.0), &AssignConfig::default()).unwrap();
        assert!(r.link_flow(2, 0) > 0.0);
        assert!(r.relative_gap < aon.relative_gap);
        assert!(r.total_travel_time < aon.total_travel_time);
        let shares: f64 = r.path_flows.paths(0, 0).iter().map(|p| p.share).sum();
        assert!((shares - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_settings() {
        let net = parallel(600.0);
        let cfg = AssignConfig { max_iterations: 0, ..Default::default() };
        assert!(matches!(assign(&net, &demand(1.0), &cfg), Err(SimulatorError::Config(_))));
    }
}
