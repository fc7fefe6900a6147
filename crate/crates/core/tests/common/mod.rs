//! Test-side oracles and fixtures for the acceptance target.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use tripflow_core::estimation::LinkCountSeries;
use tripflow_core::network::{LinkId, LinkSpec, Network, Node, NodeId, TimeGrid, ZoneId, ZoneSpec};
use tripflow_core::simulator::{AssignmentProportions, OdMatrixSeries, ProportionEntry, SimulationResult};

/// Every file below `dir`, keyed by relative path.
pub fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        let mut entries: Vec<_> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
        entries.sort();
        for path in entries {
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                out.insert(path.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&path).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}

// ---------------------------------------------------------------------------
// Bound-constrained least squares

/// A small instance of the upper-level problem built directly from a
/// random proportion matrix.
pub struct QpInstance {
    pub prior: OdMatrixSeries,
    pub proportions: AssignmentProportions,
    pub counts: LinkCountSeries,
    pub omega: f64,
    /// Dense rows over the unknowns `pair * T + t`, in count-entry order.
    pub dense: DMatrix<f64>,
    pub observed: DVector<f64>,
}

pub fn random_qp(rng: &mut ChaCha8Rng, omega: f64) -> QpInstance {
    let pairs = rng.random_range(1..=2usize);
    let t_count = rng.random_range(1..=2usize);
    let n = pairs * t_count;
    let grid = TimeGrid::new(0.0, 900.0, t_count);
    let pair_ids: Vec<_> = (0..pairs as i64).map(|k| (ZoneId(2 * k + 1), ZoneId(2 * k + 2))).collect();
    // Small prior entries next to low counts put some optima on the bound.
    let prior_values: Vec<f64> = (0..n)
        .map(|_| if rng.random_bool(0.3) { rng.random_range(0.0..2.0) } else { rng.random_range(0.0..100.0) })
        .collect();
    let prior = OdMatrixSeries::from_values(grid, pair_ids, prior_values).unwrap();

    // Distinct (link, interval) rows.
    let mut slots: Vec<(usize, usize)> = (0..4).flat_map(|a| (0..t_count).map(move |h| (a, h))).collect();
    let m = rng.random_range(1..=4usize).min(slots.len());
    let mut rows = Vec::new();
    for _ in 0..m {
        let k = rng.random_range(0..slots.len());
        rows.push(slots.swap_remove(k));
    }
    rows.sort();

    let mut entries = Vec::new();
    let mut counts = LinkCountSeries::new(grid);
    let mut dense = DMatrix::zeros(m, n);
    let mut observed = DVector::zeros(m);
    for (r, &(link, h)) in rows.iter().enumerate() {
        for pair in 0..pairs {
            for t in 0..t_count {
                if rng.random_bool(0.7) {
                    let value = rng.random_range(0.1..1.0);
                    entries.push(ProportionEntry { link, pair, crossing: h, departure: t, value });
                    dense[(r, pair * t_count + t)] = value;
                }
            }
        }
        let y = if rng.random_bool(0.3) { rng.random_range(0.0..5.0) } else { rng.random_range(0.0..150.0) };
        counts.insert(link, h, y).unwrap();
        observed[r] = y;
    }
    QpInstance {
        prior,
        proportions: AssignmentProportions::from_entries(entries),
        counts,
        omega,
        dense,
        observed,
    }
}

/// Exact minimizer of `w |x - x0|^2 + (1 - w) |P x - y|^2` over `x >= 0`
/// by enumerating the active set and checking the KKT conditions.
pub fn kkt_minimizer(p: &DMatrix<f64>, y: &DVector<f64>, x0: &DVector<f64>, w: f64) -> DVector<f64> {
    let n = x0.len();
    let h = DMatrix::identity(n, n) * w + p.transpose() * p * (1.0 - w);
    let b = x0 * w + p.transpose() * y * (1.0 - w);
    let scale = b.amax().max(1.0);
    let mut best: Option<(f64, DVector<f64>)> = None;
    for mask in 0u32..(1 << n) {
        let free: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
        let mut x = DVector::zeros(n);
        if !free.is_empty() {
            let hff = DMatrix::from_fn(free.len(), free.len(), |r, c| h[(free[r], free[c])]);
            let bf = DVector::from_fn(free.len(), |r, _| b[free[r]]);
            let Some(sol) = hff.lu().solve(&bf) else { continue };
            for (k, &i) in free.iter().enumerate() {
                x[i] = sol[k];
            }
        }
        let grad = &h * &x - &b;
        let feasible = x.iter().all(|v| *v >= -1e-12 * scale);
        let stationary = (0..n).all(|i| free.contains(&i) || grad[i] >= -1e-10 * scale);
        if feasible && stationary {
            let value = 0.5 * x.dot(&(&h * &x)) - b.dot(&x);
            if best.as_ref().is_none_or(|(v, _)| value < *v) {
                best = Some((value, x.map(|v| v.max(0.0))));
            }
        }
    }
    best.expect("a strictly convex problem has a KKT point").1
}

// ---------------------------------------------------------------------------
// Networks

pub fn link(id: i64, from: i64, to: i64, ff: f64, cap: f64, lanes: u32) -> LinkSpec {
    LinkSpec {
        id: LinkId(id),
        from: NodeId(from),
        to: NodeId(to),
        free_flow_time: ff,
        capacity: cap,
        lanes,
    }
}

pub fn network(nodes: i64, links: Vec<LinkSpec>, zones: &[(i64, i64)]) -> Network {
    let nodes = (1..=nodes).map(|i| Node { id: NodeId(i), x: i as f64, y: 0.0 }).collect();
    let zones = zones
        .iter()
        .map(|&(z, n)| ZoneSpec { id: ZoneId(z), node: NodeId(n) })
        .collect();
    Network::new(nodes, links, zones).unwrap()
}

/// Largest violation of flow conservation in a simulation:
///
/// * every OD slice releases its demand and splits it into exited and
///   unfinished vehicles;
/// * at every node without a zone, inflow equals outflow in every interval;
/// * at every node, total arrivals plus departures released there equal
///   total departures onto links plus trips ending there;
/// * vehicles still on links at the horizon match the unfinished count.
pub fn conservation_error(network: &Network, demand: &OdMatrixSeries, sim: &SimulationResult) -> f64 {
    let t_count = demand.num_intervals();
    let mut worst = 0.0f64;
    let mut released_at = vec![0.0; network.nodes().len()];
    let mut exited_at = vec![0.0; network.nodes().len()];
    for (p, &(o, d)) in demand.pairs().iter().enumerate() {
        let on = network.zone_node(network.zone_idx(o).unwrap());
        let dn = network.zone_node(network.zone_idx(d).unwrap());
        for t in 0..t_count {
            let b = sim.od_balance[p * t_count + t];
            worst = worst.max((b.released - demand.get(p, t)).abs());
            worst = worst.max((b.released - b.exited - b.unfinished).abs());
            released_at[on] += b.released;
            exited_at[dn] += b.exited;
        }
    }
    let zone_nodes: Vec<usize> = (0..network.zones().len()).map(|z| network.zone_node(z)).collect();
    for node in 0..network.nodes().len() {
        let mut total_in = released_at[node];
        let mut total_out = exited_at[node];
        for h in 0..t_count {
            let arriving: f64 = network.incoming(node).iter().map(|&a| sim.link_outflow(a, h)).sum();
            let leaving: f64 = network.outgoing(node).iter().map(|&a| sim.link_flow(a, h)).sum();
            if !zone_nodes.contains(&node) {
                worst = worst.max((arriving - leaving).abs());
            }
            total_in += arriving;
            total_out += leaving;
        }
        worst = worst.max((total_in - total_out).abs());
    }
    let on_links: f64 = sim.link_flows.iter().sum::<f64>() - sim.link_outflows.iter().sum::<f64>();
    worst.max((on_links - sim.vehicles_unfinished).abs())
}

/// Largest relative gap between proportion-weighted demand and simulated
/// link flows, relative to `max(|flow|, 1)`.
pub fn reconstruction_error(demand: &OdMatrixSeries, sim: &SimulationResult) -> f64 {
    let rebuilt = sim.proportions.reconstruct(demand, sim.num_links);
    rebuilt
        .iter()
        .zip(&sim.link_flows)
        .map(|(r, f)| (r - f).abs() / f.abs().max(1.0))
        .fold(0.0, f64::max)
}
