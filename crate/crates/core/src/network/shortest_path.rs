use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::{Network, NetworkError, TimeGrid};

/// Piecewise-constant link traversal times: `time(link, h)` applies to a
/// vehicle entering the link during interval `h`. Entry times past the
/// horizon use the last interval.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkTimes {
    grid: TimeGrid,
    num_links: usize,
    values: Vec<f64>,
}

impl LinkTimes {
    pub fn new(grid: TimeGrid, num_links: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), grid.num_intervals * num_links);
        LinkTimes {
            grid,
            num_links,
            values,
        }
    }

    /// Free-flow times in every interval.
    pub fn free_flow(network: &Network, grid: TimeGrid) -> Self {
        let values = network
            .links()
            .iter()
            .flat_map(|l| std::iter::repeat_n(l.free_flow_time, grid.num_intervals))
            .collect();
        LinkTimes::new(grid, network.num_links(), values)
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn num_links(&self) -> usize {
        self.num_links
    }

    pub fn get(&self, link: usize, interval: usize) -> f64 {
        self.values[link * self.grid.num_intervals + interval]
    }

    pub fn set(&mut self, link: usize, interval: usize, seconds: f64) {
        self.values[link * self.grid.num_intervals + interval] = seconds;
    }

    /// Traversal time for a vehicle entering `link` at wall-clock `at`.
    pub fn at(&self, link: usize, at: f64) -> f64 {
        self.get(link, self.grid.interval_of(at))
    }
}

/// Ordered link sequence with its departure and arrival clock times.
#[derive(Debug, Clone, PartialEq)]
pub struct Route {
    pub links: Vec<usize>,
    pub departure: f64,
    pub arrival: f64,
}

impl Route {
    pub fn travel_time(&self) -> f64 {
        self.arrival - self.departure
    }
}

/// Walks `links` from `departure`, reading each link time at its entry.
pub fn path_travel_time(links: &[usize], times: &LinkTimes, departure: f64) -> f64 {
    links
        .iter()
        .fold(departure, |clock, &l| clock + times.at(l, clock))
        - departure
}

#[derive(Debug, PartialEq)]
struct Label {
    arrival: f64,
    node: usize,
}

impl Eq for Label {}

impl Ord for Label {
    fn cmp(&self, other: &Self) -> Ordering {
        // Min-heap on arrival, then on node index.
        other
            .arrival
            .total_cmp(&self.arrival)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Label {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Earliest-arrival route between two zones for a departure at the start of
/// `depart_interval`, under entry-time link costs.
///
/// Label setting is exact whenever link times are FIFO-consistent, i.e.
/// entering a link later never lets a vehicle leave it earlier.
pub fn time_dependent_shortest_path(
    network: &Network,
    times: &LinkTimes,
    origin: usize,
    dest: usize,
    depart_interval: usize,
) -> Result<Route, NetworkError> {
    let zone_err = || NetworkError::Unreachable {
        origin: network.zones()[origin].id,
        dest: network.zones()[dest].id,
    };
    if origin == dest {
        return Err(NetworkError::SameOriginDestination(network.zones()[origin].id));
    }
    let departure = times.grid().interval_start(depart_interval);
    let (src, dst) = (network.zone_node(origin), network.zone_node(dest));
    let n = network.nodes().len();
    let mut arrival = vec![f64::INFINITY; n];
    let mut pred: Vec<Option<usize>> = vec![None; n];
    let mut settled = vec![false; n];
    let mut heap = BinaryHeap::new();
    arrival[src] = departure;
    heap.push(Label {
        arrival: departure,
        node: src,
    });

    while let Some(Label { arrival: t, node }) = heap.pop() {
        if settled[node] {
            continue;
        }
        settled[node] = true;
        if node == dst {
            break;
        }
        for &l in network.outgoing(node) {
            let next = network.link(l).to;
            if settled[next] {
                continue;
            }
            let reach = t + times.at(l, t);
            if reach < arrival[next] {
                arrival[next] = reach;
                pred[next] = Some(l);
                heap.push(Label {
                    arrival: reach,
                    node: next,
                });
            }
        }
    }

    if !settled[dst] {
        return Err(zone_err());
    }
    let mut links = Vec::new();
    let mut cursor = dst;
    while let Some(l) = pred[cursor] {
        links.push(l);
        cursor = network.link(l).from;
    }
    links.reverse();
    Ok(Route {
        links,
        departure,
        arrival: arrival[dst],
    })
}
