//! Point-queue dynamic network loading.
//!
//! Demand is continuous fluid released uniformly over each departure
//! interval in small ticks. Every link delays entering fluid by its
//! free-flow time (rounded up to whole ticks) and then discharges it through
//! a FIFO server whose per-tick volume is the integral of the link's
//! capacity profile over the tick. Each fluid parcel carries the fraction of
//! its OD slice it represents, so assignment proportions are accumulated
//! directly and reproduce link flows by construction.

use std::collections::VecDeque;

use log::warn;

use super::gap::{gap_terms, relative_gap};
use super::{
    AssignmentProportions, OdBalance, OdMatrixSeries, PathFlowBundle, ProportionEntry,
    SimulationResult, SimulatorError,
};
use crate::network::{LinkTimes, Network};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoadingConfig {
    /// Seconds per loading tick; must divide the interval length.
    pub tick: f64,
}

impl Default for LoadingConfig {
    fn default() -> Self {
        LoadingConfig { tick: 10.0 }
    }
}

struct RouteSlot {
    /// Pair-major OD slice index.
    slice: usize,
    links: Vec<usize>,
    share: f64,
}

#[derive(Debug, Clone, Copy)]
struct Parcel {
    route: u32,
    leg: u32,
    entry: u32,
    share: f64,
    volume: f64,
    /// Sum of volume x departure tick.
    dep_weight: f64,
}

struct LinkState {
    ff_ticks: u32,
    /// Discharge volume per tick when the capacity is constant.
    base_capacity: f64,
    profile: Option<Vec<f64>>,
    queue: VecDeque<Parcel>,
}

impl LinkState {
    fn capacity(&self, tick: usize) -> f64 {
        match &self.profile {
            Some(p) => p[tick],
            None => self.base_capacity,
        }
    }
}

struct Accumulators {
    t_count: usize,
    ticks_per_interval: usize,
    horizon: usize,
    link_flows: Vec<f64>,
    link_outflows: Vec<f64>,
    /// Per link and tick, volume entering and volume discharged.
    entering: Vec<f64>,
    discharged: Vec<f64>,
    time_volume: Vec<f64>,
    time_weight: Vec<f64>,
    probe_time: Vec<f64>,
    probe_weight: Vec<f64>,
    /// Per route, legs x crossing intervals.
    route_props: Vec<Vec<f64>>,
    balance: Vec<OdBalance>,
    delay_ticks: f64,
    travel_ticks: f64,
}

impl Accumulators {
    fn enter(&mut self, link: usize, parcel: &Parcel) {
        let tick = parcel.entry as usize;
        let h = tick / self.ticks_per_interval;
        self.link_flows[link * self.t_count + h] += parcel.volume;
        self.entering[link * self.horizon + tick] += parcel.volume;
        self.route_props[parcel.route as usize][parcel.leg as usize * self.t_count + h] += parcel.share;
    }

    fn traversal(&mut self, link: usize, entry: usize, ticks: f64, volume: f64, share: f64) {
        let h = entry / self.ticks_per_interval;
        let k = link * self.t_count + h;
        self.time_volume[k] += volume * ticks;
        self.time_weight[k] += volume;
        self.probe_time[k] += share * ticks;
        self.probe_weight[k] += share;
    }
}

/// Loads `path_flows` for `demand` onto the network and measures link
/// flows, experienced link times, delays and assignment proportions.
pub fn dynamic_network_loading(
    network: &Network,
    path_flows: &PathFlowBundle,
    demand: &OdMatrixSeries,
    config: &LoadingConfig,
) -> Result<SimulationResult, SimulatorError> {
    let grid = demand.grid();
    let t_count = grid.num_intervals;
    let tick = config.tick;
    if !(tick > 0.0) {
        return Err(SimulatorError::Config("tick must be positive".into()));
    }
    let per_interval = grid.interval_length / tick;
    if (per_interval - per_interval.round()).abs() > 1e-9 || per_interval.round() < 1.0 {
        return Err(SimulatorError::TickMismatch {
            interval: grid.interval_length,
            tick,
        });
    }
    let ticks_per_interval = per_interval.round() as usize;
    let horizon = ticks_per_interval * t_count;
    if path_flows.num_intervals() != t_count || path_flows.slots().len() != demand.num_pairs() * t_count {
        return Err(SimulatorError::Config("path flows do not match the demand layout".into()));
    }

    let routes = build_routes(network, path_flows, demand)?;
    let mut by_interval: Vec<Vec<usize>> = vec![Vec::new(); t_count];
    for (r, route) in routes.iter().enumerate() {
        by_interval[route.slice % t_count].push(r);
    }

    let mut links: Vec<LinkState> = network
        .links()
        .iter()
        .map(|link| {
            let ff_ticks = ((link.free_flow_time / tick) - 1e-9).ceil().max(1.0) as u32;
            let profile = (!link.capacity_windows.is_empty()).then(|| {
                (0..horizon)
                    .map(|j| {
                        let from = grid.start + j as f64 * tick;
                        link.discharge_volume(from, from + tick)
                    })
                    .collect()
            });
            LinkState {
                ff_ticks,
                base_capacity: link.capacity * tick / 3600.0,
                profile,
                queue: VecDeque::new(),
            }
        })
        .collect();

    let n_links = network.num_links();
    let mut acc = Accumulators {
        t_count,
        ticks_per_interval,
        horizon,
        link_flows: vec![0.0; n_links * t_count],
        link_outflows: vec![0.0; n_links * t_count],
        entering: vec![0.0; n_links * horizon],
        discharged: vec![0.0; n_links * horizon],
        time_volume: vec![0.0; n_links * t_count],
        time_weight: vec![0.0; n_links * t_count],
        probe_time: vec![0.0; n_links * t_count],
        probe_weight: vec![0.0; n_links * t_count],
        route_props: routes.iter().map(|r| vec![0.0; r.links.len() * t_count]).collect(),
        balance: vec![OdBalance::default(); demand.num_pairs() * t_count],
        delay_ticks: 0.0,
        travel_ticks: 0.0,
    };

    let release_fraction = 1.0 / ticks_per_interval as f64;
    let mut moved: Vec<Parcel> = Vec::new();
    for j in 0..horizon {
        let t = j / ticks_per_interval;
        for &r in &by_interval[t] {
            let route = &routes[r];
            let volume = demand.values()[route.slice] * route.share * release_fraction;
            let parcel = Parcel {
                route: r as u32,
                leg: 0,
                entry: j as u32,
                share: route.share * release_fraction,
                volume,
                dep_weight: volume * j as f64,
            };
            acc.balance[route.slice].released += volume;
            push_parcel(&mut links, &mut acc, &routes, parcel);
        }

        for a in 0..n_links {
            let mut remaining = links[a].capacity(j);
            let ff = links[a].ff_ticks;
            moved.clear();
            while let Some(front) = links[a].queue.front_mut() {
                if front.entry + ff > j as u32 {
                    break;
                }
                if front.volume <= remaining {
                    remaining -= front.volume;
                    moved.push(links[a].queue.pop_front().unwrap());
                } else {
                    if remaining <= 0.0 {
                        break;
                    }
                    let fraction = remaining / front.volume;
                    let served = Parcel {
                        share: front.share * fraction,
                        volume: remaining,
                        dep_weight: front.dep_weight * fraction,
                        ..*front
                    };
                    front.share -= served.share;
                    front.volume -= served.volume;
                    front.dep_weight -= served.dep_weight;
                    remaining = 0.0;
                    moved.push(served);
                    break;
                }
            }
            for k in 0..moved.len() {
                let p = moved[k];
                let entry = p.entry as usize;
                let ready = entry + ff as usize;
                acc.delay_ticks += p.volume * (j - ready) as f64;
                acc.traversal(a, entry, (j - entry) as f64, p.volume, p.share);
                acc.link_outflows[a * t_count + t] += p.volume;
                acc.discharged[a * horizon + j] += p.volume;
                let route = &routes[p.route as usize];
                let next_leg = p.leg as usize + 1;
                if next_leg == route.links.len() {
                    acc.balance[route.slice].exited += p.volume;
                    acc.travel_ticks += p.volume * j as f64 - p.dep_weight;
                } else {
                    let next = Parcel {
                        leg: next_leg as u32,
                        entry: j as u32,
                        ..p
                    };
                    push_parcel(&mut links, &mut acc, &routes, next);
                }
            }
        }
    }

    // Whatever is still on a link at the horizon.
    let mut unfinished = 0.0;
    for (a, state) in links.iter().enumerate() {
        for p in &state.queue {
            let entry = p.entry as usize;
            let ready = entry + state.ff_ticks as usize;
            if ready < horizon {
                acc.delay_ticks += p.volume * (horizon - ready) as f64;
            }
            let held = ((horizon - entry) as f64).max(state.ff_ticks as f64);
            acc.traversal(a, entry, held, p.volume, p.share);
            acc.travel_ticks += p.volume * horizon as f64 - p.dep_weight;
            acc.balance[routes[p.route as usize].slice].unfinished += p.volume;
            unfinished += p.volume;
        }
    }
    if unfinished > 0.0 {
        warn!(
            "{unfinished:.3} vehicles still in the network at the end of the horizon"
        );
    }

    let link_times = experienced_times(network, &links, &acc, grid, tick);
    let proportions = collect_proportions(&routes, &acc, t_count);
    let released: f64 = acc.balance.iter().map(|b| b.released).sum();

    let mut result = SimulationResult {
        grid,
        num_links: n_links,
        link_flows: acc.link_flows,
        link_outflows: acc.link_outflows,
        link_times,
        proportions,
        path_flows: path_flows.clone(),
        total_travel_time: acc.travel_ticks * tick,
        total_delay: acc.delay_ticks * tick,
        vehicles_unfinished: unfinished,
        vehicles_released: released,
        relative_gap: 0.0,
        od_balance: acc.balance,
        iterations: 1,
    };
    let terms = gap_terms(network, demand, path_flows, &result.link_times)?;
    result.relative_gap = relative_gap(&terms);
    Ok(result)
}

fn push_parcel(links: &mut [LinkState], acc: &mut Accumulators, routes: &[RouteSlot], parcel: Parcel) {
    let route = &routes[parcel.route as usize];
    let link = route.links[parcel.leg as usize];
    acc.enter(link, &parcel);
    let queue = &mut links[link].queue;
    if let Some(back) = queue.back_mut() {
        if back.route == parcel.route && back.leg == parcel.leg && back.entry == parcel.entry {
            back.share += parcel.share;
            back.volume += parcel.volume;
            back.dep_weight += parcel.dep_weight;
            return;
        }
    }
    queue.push_back(parcel);
}

fn build_routes(
    network: &Network,
    path_flows: &PathFlowBundle,
    demand: &OdMatrixSeries,
) -> Result<Vec<RouteSlot>, SimulatorError> {
    let t_count = demand.num_intervals();
    let mut routes = Vec::new();
    for (pair, &(o, d)) in demand.pairs().iter().enumerate() {
        let origin = network.zone_node(network.zone_idx(o)?);
        let dest = network.zone_node(network.zone_idx(d)?);
        for t in 0..t_count {
            let slice = pair * t_count + t;
            let paths = path_flows.paths(pair, t);
            if paths.is_empty() {
                if demand.get(pair, t) > 0.0 {
                    return Err(SimulatorError::MissingPathFlows {
                        origin: o,
                        dest: d,
                        interval: t + 1,
                    });
                }
                continue;
            }
            for path in paths {
                let connected = !path.links.is_empty()
                    && network.link(path.links[0]).from == origin
                    && network.link(*path.links.last().unwrap()).to == dest
                    && path
                        .links
                        .windows(2)
                        .all(|w| network.link(w[0]).to == network.link(w[1]).from);
                if !connected {
                    return Err(SimulatorError::InvalidPath {
                        origin: o,
                        dest: d,
                        interval: t + 1,
                    });
                }
                if path.share > 0.0 {
                    routes.push(RouteSlot {
                        slice,
                        links: path.links.clone(),
                        share: path.share,
                    });
                }
            }
        }
    }
    Ok(routes)
}

/// Flow-weighted experienced traversal times per (link, entry interval).
/// Intervals nobody entered get the time a marginal vehicle entering at
/// the interval start would have experienced.
fn experienced_times(
    network: &Network,
    links: &[LinkState],
    acc: &Accumulators,
    grid: crate::network::TimeGrid,
    tick: f64,
) -> LinkTimes {
    let t_count = acc.t_count;
    let horizon = acc.horizon;
    let mut times = LinkTimes::free_flow(network, grid);
    for (a, state) in links.iter().enumerate() {
        let entering = &acc.entering[a * horizon..(a + 1) * horizon];
        let discharged = &acc.discharged[a * horizon..(a + 1) * horizon];
        for h in 0..t_count {
            let k = a * t_count + h;
            let ticks = if acc.time_weight[k] > 0.0 {
                acc.time_volume[k] / acc.time_weight[k]
            } else if acc.probe_weight[k] > 0.0 {
                acc.probe_time[k] / acc.probe_weight[k]
            } else {
                marginal_ticks(entering, discharged, h * acc.ticks_per_interval, state.ff_ticks as usize)
            };
            times.set(a, h, ticks * tick);
        }
    }
    times
}

/// Ticks a zero-volume vehicle entering at `entry` would spend on the link.
fn marginal_ticks(entering: &[f64], discharged: &[f64], entry: usize, ff: usize) -> f64 {
    let horizon = entering.len();
    let ahead: f64 = entering[..=entry.min(horizon - 1)].iter().sum();
    let ready = entry + ff;
    if ready >= horizon {
        return ff as f64;
    }
    let mut served: f64 = discharged[..ready].iter().sum();
    for (j, &d) in discharged.iter().enumerate().skip(ready) {
        served += d;
        if served >= ahead - 1e-9 * ahead.max(1.0) {
            return (j - entry) as f64;
        }
    }
    (horizon - entry) as f64
}

fn collect_proportions(
    routes: &[RouteSlot],
    acc: &Accumulators,
    t_count: usize,
) -> AssignmentProportions {
    use std::collections::BTreeMap;
    let mut merged: BTreeMap<(usize, usize, usize, usize), f64> = BTreeMap::new();
    for (r, route) in routes.iter().enumerate() {
        let (pair, departure) = (route.slice / t_count, route.slice % t_count);
        for (leg, &link) in route.links.iter().enumerate() {
            for h in 0..t_count {
                let v = acc.route_props[r][leg * t_count + h];
                if v > 0.0 {
                    *merged.entry((link, h, pair, departure)).or_insert(0.0) += v;
                }
            }
        }
    }
    AssignmentProportions::from_entries(
        merged
            .into_iter()
            .map(|((link, crossing, pair, departure), value)| ProportionEntry {
                link,
                pair,
                crossing,
                departure,
                value: value.min(1.0),
            })
            .collect(),
    )
}
