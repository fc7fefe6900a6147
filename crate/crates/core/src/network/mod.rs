//! Road network representation: nodes, directed links, zones and the
//! time discretization shared by every other module.

mod grid;
mod load;
mod shortest_path;

use std::collections::{HashMap, VecDeque};
use std::fmt;

use thiserror::Error;

pub use grid::{parse_clock, format_clock, TimeGrid};
pub use load::{load_network, read_links, read_nodes, read_zones, write_network};
pub use shortest_path::{path_travel_time, time_dependent_shortest_path, LinkTimes, Route};

/// External node identifier as it appears in input files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub i64);

/// External link identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LinkId(pub i64);

/// External zone identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ZoneId(pub i64);

macro_rules! display_id {
    ($($t:ty),*) => {$(
        impl fmt::Display for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}", self.0)
            }
        }
    )*};
}
display_id!(NodeId, LinkId, ZoneId);

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: NodeId,
    pub x: f64,
    pub y: f64,
}

/// A directed link. `from` and `to` are internal node indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Link {
    pub id: LinkId,
    pub from: usize,
    pub to: usize,
    /// Seconds.
    pub free_flow_time: f64,
    /// Vehicles per hour.
    pub capacity: f64,
    pub lanes: u32,
    /// Time windows (wall-clock seconds) during which only a fraction of the
    /// capacity is available. Empty for an unaffected link.
    pub capacity_windows: Vec<CapacityWindow>,
}

/// Capacity multiplier applied on `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CapacityWindow {
    pub start: f64,
    pub end: f64,
    pub factor: f64,
}

impl Link {
    /// Capacity in vehicles per hour at wall-clock time `at`.
    pub fn capacity_at(&self, at: f64) -> f64 {
        let factor = self
            .capacity_windows
            .iter()
            .filter(|w| at >= w.start && at < w.end)
            .fold(1.0, |acc, w| acc * w.factor);
        self.capacity * factor
    }

    /// Vehicles that can be discharged during `[from, to)`, integrating the
    /// piecewise-constant capacity profile exactly.
    pub fn discharge_volume(&self, from: f64, to: f64) -> f64 {
        if self.capacity_windows.is_empty() {
            return self.capacity * (to - from) / 3600.0;
        }
        let mut cuts = vec![from, to];
        for w in &self.capacity_windows {
            for edge in [w.start, w.end] {
                if edge > from && edge < to {
                    cuts.push(edge);
                }
            }
        }
        cuts.sort_by(f64::total_cmp);
        cuts.windows(2)
            .map(|pair| self.capacity_at(pair[0]) * (pair[1] - pair[0]) / 3600.0)
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Zone {
    pub id: ZoneId,
    /// Internal index of the node the zone's implicit connector attaches to.
    pub node: usize,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error("{file}:{line}: {message}")]
    Parse {
        file: String,
        line: u64,
        message: String,
    },
    #[error("{0}")]
    Io(String),
    #[error("duplicate {kind} id {id}")]
    DuplicateId { kind: &'static str, id: i64 },
    #[error("link {link} references unknown node {node}")]
    DanglingNode { link: LinkId, node: NodeId },
    #[error("zone {zone} references unknown node {node}")]
    DanglingZoneNode { zone: ZoneId, node: NodeId },
    #[error("link {0} has nonpositive capacity")]
    NonPositiveCapacity(LinkId),
    #[error("link {0} has nonpositive free-flow time")]
    NonPositiveFreeFlowTime(LinkId),
    #[error("link {0} has zero lanes")]
    NoLanes(LinkId),
    #[error("link {0} is a self loop")]
    SelfLoop(LinkId),
    #[error("zone {0} is attached to a node without any incident link")]
    IsolatedZone(ZoneId),
    #[error("no path from zone {origin} to zone {dest}")]
    Unreachable { origin: ZoneId, dest: ZoneId },
    #[error("unknown zone {0}")]
    UnknownZone(ZoneId),
    #[error("unknown link {0}")]
    UnknownLink(LinkId),
    #[error("origin and destination are the same zone {0}")]
    SameOriginDestination(ZoneId),
    #[error("network has no zones")]
    NoZones,
}

/// Raw link record before node ids are resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkSpec {
    pub id: LinkId,
    pub from: NodeId,
    pub to: NodeId,
    pub free_flow_time: f64,
    pub capacity: f64,
    pub lanes: u32,
}

/// Raw zone record.
#[derive(Debug, Clone, PartialEq)]
pub struct ZoneSpec {
    pub id: ZoneId,
    pub node: NodeId,
}

/// Immutable, validated road network.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    nodes: Vec<Node>,
    links: Vec<Link>,
    zones: Vec<Zone>,
    outgoing: Vec<Vec<usize>>,
    incoming: Vec<Vec<usize>>,
    node_index: HashMap<NodeId, usize>,
    link_index: HashMap<LinkId, usize>,
    zone_index: HashMap<ZoneId, usize>,
}

impl Network {
    /// Builds and validates a network. Node, link and zone ids must be
    /// unique; they are re-indexed densely in input order.
    pub fn new(
        nodes: Vec<Node>,
        links: Vec<LinkSpec>,
        zones: Vec<ZoneSpec>,
    ) -> Result<Network, NetworkError> {
        let mut node_index = HashMap::with_capacity(nodes.len());
        for (idx, node) in nodes.iter().enumerate() {
            if node_index.insert(node.id, idx).is_some() {
                return Err(NetworkError::DuplicateId {
                    kind: "node",
                    id: node.id.0,
                });
            }
        }

        let mut link_index = HashMap::with_capacity(links.len());
        let mut resolved = Vec::with_capacity(links.len());
        for (idx, spec) in links.into_iter().enumerate() {
            if link_index.insert(spec.id, idx).is_some() {
                return Err(NetworkError::DuplicateId {
                    kind: "link",
                    id: spec.id.0,
                });
            }
            let from = *node_index.get(&spec.from).ok_or(NetworkError::DanglingNode {
                link: spec.id,
                node: spec.from,
            })?;
            let to = *node_index.get(&spec.to).ok_or(NetworkError::DanglingNode {
                link: spec.id,
                node: spec.to,
            })?;
            if from == to {
                return Err(NetworkError::SelfLoop(spec.id));
            }
            if !(spec.capacity > 0.0) || !spec.capacity.is_finite() {
                return Err(NetworkError::NonPositiveCapacity(spec.id));
            }
            if !(spec.free_flow_time > 0.0) || !spec.free_flow_time.is_finite() {
                return Err(NetworkError::NonPositiveFreeFlowTime(spec.id));
            }
            if spec.lanes == 0 {
                return Err(NetworkError::NoLanes(spec.id));
            }
            resolved.push(Link {
                id: spec.id,
                from,
                to,
                free_flow_time: spec.free_flow_time,
                capacity: spec.capacity,
                lanes: spec.lanes,
                capacity_windows: Vec::new(),
            });
        }

        let mut outgoing = vec![Vec::new(); nodes.len()];
        let mut incoming = vec![Vec::new(); nodes.len()];
        for (idx, link) in resolved.iter().enumerate() {
            outgoing[link.from].push(idx);
            incoming[link.to].push(idx);
        }
        // Scan order drives shortest-path tie breaking: lowest next node first.
        for out in &mut outgoing {
            out.sort_by_key(|&l| (nodes[resolved[l].to].id, resolved[l].id));
        }

        if zones.is_empty() {
            return Err(NetworkError::NoZones);
        }
        let mut zone_index = HashMap::with_capacity(zones.len());
        let mut resolved_zones = Vec::with_capacity(zones.len());
        for (idx, spec) in zones.into_iter().enumerate() {
            if zone_index.insert(spec.id, idx).is_some() {
                return Err(NetworkError::DuplicateId {
                    kind: "zone",
                    id: spec.id.0,
                });
            }
            let node = *node_index
                .get(&spec.node)
                .ok_or(NetworkError::DanglingZoneNode {
                    zone: spec.id,
                    node: spec.node,
                })?;
            if outgoing[node].is_empty() && incoming[node].is_empty() {
                return Err(NetworkError::IsolatedZone(spec.id));
            }
            resolved_zones.push(Zone { id: spec.id, node });
        }

        Ok(Network {
            nodes,
            links: resolved,
            zones: resolved_zones,
            outgoing,
            incoming,
            node_index,
            link_index,
            zone_index,
        })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn zones(&self) -> &[Zone] {
        &self.zones
    }

    pub fn link(&self, idx: usize) -> &Link {
        &self.links[idx]
    }

    pub fn num_links(&self) -> usize {
        self.links.len()
    }

    /// Outgoing link indices of a node, ordered by head node id.
    pub fn outgoing(&self, node: usize) -> &[usize] {
        &self.outgoing[node]
    }

    pub fn incoming(&self, node: usize) -> &[usize] {
        &self.incoming[node]
    }

    pub fn node_idx(&self, id: NodeId) -> Option<usize> {
        self.node_index.get(&id).copied()
    }

    pub fn link_idx(&self, id: LinkId) -> Result<usize, NetworkError> {
        self.link_index
            .get(&id)
            .copied()
            .ok_or(NetworkError::UnknownLink(id))
    }

    pub fn zone_idx(&self, id: ZoneId) -> Result<usize, NetworkError> {
        self.zone_index
            .get(&id)
            .copied()
            .ok_or(NetworkError::UnknownZone(id))
    }

    /// Node the zone attaches to.
    pub fn zone_node(&self, zone: usize) -> usize {
        self.zones[zone].node
    }

    /// Whether `dest` can be reached from `origin` along directed links.
    pub fn is_reachable(&self, origin: usize, dest: usize) -> bool {
        let (src, dst) = (self.zone_node(origin), self.zone_node(dest));
        let mut seen = vec![false; self.nodes.len()];
        let mut frontier = VecDeque::from([src]);
        seen[src] = true;
        while let Some(node) = frontier.pop_front() {
            if node == dst {
                return true;
            }
            for &l in &self.outgoing[node] {
                let next = self.links[l].to;
                if !seen[next] {
                    seen[next] = true;
                    frontier.push_back(next);
                }
            }
        }
        false
    }

    /// Checks that every listed OD pair is connected.
    pub fn check_od_pairs<'a, I>(&self, pairs: I) -> Result<(), NetworkError>
    where
        I: IntoIterator<Item = &'a (ZoneId, ZoneId)>,
    {
        for &(o, d) in pairs {
            if o == d {
                return Err(NetworkError::SameOriginDestination(o));
            }
            let (oi, di) = (self.zone_idx(o)?, self.zone_idx(d)?);
            if !self.is_reachable(oi, di) {
                return Err(NetworkError::Unreachable { origin: o, dest: d });
            }
        }
        Ok(())
    }

    /// Returns a copy of the network where `link` carries an extra capacity
    /// window. The receiver is left untouched.
    pub fn with_capacity_window(&self, link: usize, window: CapacityWindow) -> Network {
        let mut out = self.clone();
        out.links[link].capacity_windows.push(window);
        out
    }
}
