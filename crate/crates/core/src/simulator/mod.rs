//! Lower-level dynamic traffic assignment: point-queue network loading,
//! method-of-successive-averages route choice and the assignment
//! proportions that link OD departures to link crossings.

mod assign;
mod gap;
mod loading;

use thiserror::Error;

use crate::network::{LinkTimes, NetworkError, TimeGrid, ZoneId};

pub use assign::{assign, AssignConfig};
pub use gap::{relative_gap, GapTerm};
pub use loading::{dynamic_network_loading, LoadingConfig};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimulatorError {
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error("path for OD pair {origin}->{dest}, interval {interval} is not a connected route between the zones")]
    InvalidPath {
        origin: ZoneId,
        dest: ZoneId,
        interval: usize,
    },
    #[error("no path flows for OD pair {origin}->{dest}, interval {interval} with positive demand")]
    MissingPathFlows {
        origin: ZoneId,
        dest: ZoneId,
        interval: usize,
    },
    #[error("interval length {interval}s is not a whole multiple of the {tick}s loading tick")]
    TickMismatch { interval: f64, tick: f64 },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("demand value {value} for OD index {pair}, interval {interval} is negative or not finite")]
    InvalidDemand {
        pair: usize,
        interval: usize,
        value: f64,
    },
    #[error("demand has {found} entries, expected {expected}")]
    DemandShape { expected: usize, found: usize },
}

/// Trips per OD pair and departure interval.
///
/// Values are stored pair-major: the unknown for pair `p` and interval `t`
/// sits at `p * T + t`.
#[derive(Debug, Clone, PartialEq)]
pub struct OdMatrixSeries {
    grid: TimeGrid,
    pairs: Vec<(ZoneId, ZoneId)>,
    trips: Vec<f64>,
}

impl OdMatrixSeries {
    pub fn zeros(grid: TimeGrid, pairs: Vec<(ZoneId, ZoneId)>) -> Self {
        let trips = vec![0.0; pairs.len() * grid.num_intervals];
        OdMatrixSeries { grid, pairs, trips }
    }

    /// Builds a series from pair-major values, rejecting negative or
    /// non-finite trips.
    pub fn from_values(
        grid: TimeGrid,
        pairs: Vec<(ZoneId, ZoneId)>,
        trips: Vec<f64>,
    ) -> Result<Self, SimulatorError> {
        let expected = pairs.len() * grid.num_intervals;
        if trips.len() != expected {
            return Err(SimulatorError::DemandShape {
                expected,
                found: trips.len(),
            });
        }
        if let Some(k) = trips.iter().position(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(SimulatorError::InvalidDemand {
                pair: k / grid.num_intervals,
                interval: k % grid.num_intervals,
                value: trips[k],
            });
        }
        Ok(OdMatrixSeries { grid, pairs, trips })
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn pairs(&self) -> &[(ZoneId, ZoneId)] {
        &self.pairs
    }

    pub fn num_pairs(&self) -> usize {
        self.pairs.len()
    }

    pub fn num_intervals(&self) -> usize {
        self.grid.num_intervals
    }

    pub fn pair_index(&self, origin: ZoneId, dest: ZoneId) -> Option<usize> {
        self.pairs.iter().position(|&p| p == (origin, dest))
    }

    pub fn get(&self, pair: usize, interval: usize) -> f64 {
        self.trips[pair * self.grid.num_intervals + interval]
    }

    /// Panics on negative or non-finite trips.
    pub fn set(&mut self, pair: usize, interval: usize, trips: f64) {
        assert!(trips >= 0.0 && trips.is_finite(), "trips must be nonnegative");
        self.trips[pair * self.grid.num_intervals + interval] = trips;
    }

    pub fn values(&self) -> &[f64] {
        &self.trips
    }

    /// Same pairs and grid with new pair-major values.
    pub fn with_values(&self, trips: Vec<f64>) -> Result<Self, SimulatorError> {
        OdMatrixSeries::from_values(self.grid, self.pairs.clone(), trips)
    }

    /// Time series of one pair.
    pub fn series(&self, pair: usize) -> &[f64] {
        let t = self.grid.num_intervals;
        &self.trips[pair * t..(pair + 1) * t]
    }

    pub fn total(&self) -> f64 {
        self.trips.iter().sum()
    }

    /// Multiplies every entry by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        assert!(factor >= 0.0);
        OdMatrixSeries {
            grid: self.grid,
            pairs: self.pairs.clone(),
            trips: self.trips.iter().map(|v| v * factor).collect(),
        }
    }
}

/// One route with its share of an OD departure slice.
#[derive(Debug, Clone, PartialEq)]
pub struct PathShare {
    pub links: Vec<usize>,
    pub share: f64,
}

/// Route shares for every (OD pair, departure interval), pair-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PathFlowBundle {
    num_intervals: usize,
    slots: Vec<Vec<PathShare>>,
}

impl PathFlowBundle {
    pub fn new(num_pairs: usize, num_intervals: usize) -> Self {
        PathFlowBundle {
            num_intervals,
            slots: vec![Vec::new(); num_pairs * num_intervals],
        }
    }

    pub fn num_intervals(&self) -> usize {
        self.num_intervals
    }

    pub fn paths(&self, pair: usize, interval: usize) -> &[PathShare] {
        &self.slots[pair * self.num_intervals + interval]
    }

    pub fn set_paths(&mut self, pair: usize, interval: usize, paths: Vec<PathShare>) {
        self.slots[pair * self.num_intervals + interval] = paths;
    }

    /// Sole route with share 1.
    pub fn set_single(&mut self, pair: usize, interval: usize, links: Vec<usize>) {
        self.set_paths(pair, interval, vec![PathShare { links, share: 1.0 }]);
    }

    /// Moves a fraction `weight` of every slot onto the given route,
    /// scaling the existing shares by `1 - weight`.
    pub fn blend_towards(&mut self, pair: usize, interval: usize, links: &[usize], weight: f64) {
        let slot = &mut self.slots[pair * self.num_intervals + interval];
        for p in slot.iter_mut() {
            p.share *= 1.0 - weight;
        }
        match slot.iter_mut().find(|p| p.links == links) {
            Some(p) => p.share += weight,
            None => slot.push(PathShare {
                links: links.to_vec(),
                share: weight,
            }),
        }
    }

    pub(crate) fn slots(&self) -> &[Vec<PathShare>] {
        &self.slots
    }
}

/// Single stored proportion `p[link, pair, crossing, departure]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProportionEntry {
    pub link: usize,
    pub pair: usize,
    /// Interval `h` during which the flow enters the link.
    pub crossing: usize,
    /// Departure interval `t` of the OD slice.
    pub departure: usize,
    pub value: f64,
}

/// Sparse assignment proportions, sorted by (link, crossing, pair, departure).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AssignmentProportions {
    entries: Vec<ProportionEntry>,
}

impl AssignmentProportions {
    pub fn from_entries(mut entries: Vec<ProportionEntry>) -> Self {
        entries.sort_by_key(|e| (e.link, e.crossing, e.pair, e.departure));
        AssignmentProportions { entries }
    }

    pub fn entries(&self) -> &[ProportionEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, link: usize, pair: usize, crossing: usize, departure: usize) -> f64 {
        self.entries
            .binary_search_by_key(&(link, crossing, pair, departure), |e| {
                (e.link, e.crossing, e.pair, e.departure)
            })
            .map(|k| self.entries[k].value)
            .unwrap_or(0.0)
    }

    /// Link flows `y[a, h] = sum p[a, i, h, t] x[i, t]`, link-major.
    pub fn reconstruct(&self, demand: &OdMatrixSeries, num_links: usize) -> Vec<f64> {
        let t_count = demand.num_intervals();
        let mut flows = vec![0.0; num_links * t_count];
        for e in &self.entries {
            flows[e.link * t_count + e.crossing] += e.value * demand.get(e.pair, e.departure);
        }
        flows
    }
}

/// Per OD slice flow balance at the end of the horizon.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct OdBalance {
    pub released: f64,
    pub exited: f64,
    pub unfinished: f64,
}

/// Everything one loading (or a converged assignment) produces.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationResult {
    pub grid: TimeGrid,
    pub num_links: usize,
    /// Vehicles entering each link per interval, link-major.
    pub link_flows: Vec<f64>,
    /// Vehicles leaving each link per interval, link-major.
    pub link_outflows: Vec<f64>,
    pub link_times: LinkTimes,
    pub proportions: AssignmentProportions,
    pub path_flows: PathFlowBundle,
    /// Vehicle-seconds, truncated at the horizon for unfinished trips.
    pub total_travel_time: f64,
    /// Vehicle-seconds above free flow, truncated at the horizon.
    pub total_delay: f64,
    pub vehicles_unfinished: f64,
    pub vehicles_released: f64,
    pub relative_gap: f64,
    /// Pair-major, one entry per OD slice.
    pub od_balance: Vec<OdBalance>,
    /// MSA iterations performed (1 for a bare loading).
    pub iterations: usize,
}

impl SimulationResult {
    pub fn num_intervals(&self) -> usize {
        self.grid.num_intervals
    }

    pub fn link_flow(&self, link: usize, interval: usize) -> f64 {
        self.link_flows[link * self.grid.num_intervals + interval]
    }

    pub fn link_outflow(&self, link: usize, interval: usize) -> f64 {
        self.link_outflows[link * self.grid.num_intervals + interval]
    }

    /// Average delay per released vehicle, zero without demand.
    pub fn average_delay(&self) -> f64 {
        if self.vehicles_released > 0.0 {
            self.total_delay / self.vehicles_released
        } else {
            0.0
        }
    }

    /// True when more than `share` of the released demand is still in the
    /// network at the horizon.
    pub fn is_gridlocked(&self, share: f64) -> bool {
        self.vehicles_unfinished > share * self.vehicles_released
    }
}
