//! Seeded synthetic benchmark fixtures: a two-row corridor grid with ground
//! truth demand, simulated counts and a noisy prior, a single-bottleneck
//! network for incident sweeps, and AR(1) demand fleets.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use thiserror::Error;

use crate::csvio::{self, CsvError};
use crate::estimation::LinkCountSeries;
use crate::forecast::DemandSeries;
use crate::network::{
    parse_clock, write_network, LinkId, LinkSpec, Network, NetworkError, Node, NodeId, TimeGrid, ZoneId, ZoneSpec,
};
use crate::simulator::{assign, AssignConfig, OdMatrixSeries, SimulatorError};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Simulator(#[from] SimulatorError),
    #[error(transparent)]
    Csv(#[from] CsvError),
    #[error("invalid generator setting: {0}")]
    Config(String),
}

pub const DEFAULT_SEED: u64 = 42;

fn bidirectional(specs: &mut Vec<LinkSpec>, next_id: &mut i64, a: i64, b: i64, ff: f64, cap: f64, lanes: u32) {
    for (from, to) in [(a, b), (b, a)] {
        specs.push(LinkSpec {
            id: LinkId(*next_id),
            from: NodeId(from),
            to: NodeId(to),
            free_flow_time: ff,
            capacity: cap,
            lanes,
        });
        *next_id += 1;
    }
}

/// Two rows of six nodes. The top row is a fast, high-capacity corridor,
/// the bottom row a slow street, joined by short connectors at every
/// column. Zones sit on the four corners (1 and 3 on the top row, 2 and 4
/// on the bottom row), so every east-west trip shares the corridor.
pub fn corridor_grid() -> Network {
    let cols = 6;
    let id = |row: i64, col: i64| row * cols + col + 1;
    let mut nodes = Vec::new();
    for row in 0..2 {
        for col in 0..cols {
            nodes.push(Node {
                id: NodeId(id(row, col)),
                x: col as f64 * 1000.0,
                y: -(row as f64) * 500.0,
            });
        }
    }
    let mut links = Vec::new();
    let mut next = 1;
    for col in 0..cols - 1 {
        bidirectional(&mut links, &mut next, id(0, col), id(0, col + 1), 60.0, 6000.0, 3);
    }
    for col in 0..cols - 1 {
        bidirectional(&mut links, &mut next, id(1, col), id(1, col + 1), 120.0, 1800.0, 1);
    }
    for col in 0..cols {
        bidirectional(&mut links, &mut next, id(0, col), id(1, col), 30.0, 3000.0, 2);
    }
    let zones = vec![
        ZoneSpec { id: ZoneId(1), node: NodeId(id(0, 0)) },
        ZoneSpec { id: ZoneId(2), node: NodeId(id(1, 0)) },
        ZoneSpec { id: ZoneId(3), node: NodeId(id(0, cols - 1)) },
        ZoneSpec { id: ZoneId(4), node: NodeId(id(1, cols - 1)) },
    ];
    Network::new(nodes, links, zones).expect("corridor grid is valid")
}

/// Every ordered pair of distinct zones.
pub fn all_pairs(network: &Network) -> Vec<(ZoneId, ZoneId)> {
    let ids: Vec<ZoneId> = network.zones().iter().map(|z| z.id).collect();
    ids.iter()
        .flat_map(|&o| ids.iter().filter(move |&&d| d != o).map(move |&d| (o, d)))
        .collect()
}

/// Morning-peak shape in `[0.3, 1]`, highest around 60 % of the horizon.
fn peak_profile(t: usize, num_intervals: usize) -> f64 {
    let centre = 0.6 * (num_intervals as f64 - 1.0);
    let width = (num_intervals as f64 / 5.0).max(1.0);
    let z = (t as f64 - centre) / width;
    0.3 + 0.7 * (-0.5 * z * z).exp()
}

/// Ground-truth demand on `grid`: a per-pair base level times a shared
/// peak profile times a small per-entry jitter. Pairs whose zones sit on
/// opposite ends of the network get larger bases than neighbours.
pub fn truth_demand(network: &Network, grid: TimeGrid, rng: &mut ChaCha8Rng) -> OdMatrixSeries {
    let pairs = all_pairs(network);
    let x_of = |z: ZoneId| {
        let idx = network.zone_idx(z).expect("zone from the same network");
        network.nodes()[network.zone_node(idx)].x
    };
    let long = Uniform::new(60.0, 140.0).expect("valid range");
    let short = Uniform::new(10.0, 30.0).expect("valid range");
    let jitter = Uniform::new(0.9, 1.1).expect("valid range");
    let mut demand = OdMatrixSeries::zeros(grid, pairs.clone());
    for (p, &(o, d)) in pairs.iter().enumerate() {
        let base = if x_of(o) != x_of(d) {
            long.sample(rng)
        } else {
            short.sample(rng)
        };
        for t in 0..grid.num_intervals {
            demand.set(p, t, base * peak_profile(t, grid.num_intervals) * jitter.sample(rng));
        }
    }
    demand
}

/// Multiplies every entry by an independent `U(1 - noise, 1 + noise)`.
pub fn noisy_prior(truth: &OdMatrixSeries, noise: f64, rng: &mut ChaCha8Rng) -> Result<OdMatrixSeries, SynthError> {
    if !(0.0..1.0).contains(&noise) {
        return Err(SynthError::Config("noise must lie in [0, 1)".into()));
    }
    if noise == 0.0 {
        return Ok(truth.clone());
    }
    let factor = Uniform::new_inclusive(1.0 - noise, 1.0 + noise).expect("valid range");
    let values = truth.values().iter().map(|v| v * factor.sample(rng)).collect();
    Ok(truth.with_values(values)?)
}

/// Counts on every link and interval from an equilibrium run of `demand`.
pub fn simulated_counts(
    network: &Network,
    demand: &OdMatrixSeries,
    config: &AssignConfig,
) -> Result<LinkCountSeries, SynthError> {
    let sim = assign(network, demand, config)?;
    Ok(LinkCountSeries::from_flows(&sim.link_flows, demand.grid(), 0..network.num_links()))
}

/// The estimation benchmark: network, truth, prior and counts.
#[derive(Debug, Clone)]
pub struct GridFixture {
    pub network: Network,
    pub truth: OdMatrixSeries,
    pub prior: OdMatrixSeries,
    pub counts: LinkCountSeries,
}

/// 06:00 start, 16 intervals of 15 minutes.
pub fn default_grid() -> TimeGrid {
    TimeGrid::default()
}

pub fn grid_fixture(seed: u64, noise: f64) -> Result<GridFixture, SynthError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let network = corridor_grid();
    let truth = truth_demand(&network, default_grid(), &mut rng);
    let prior = noisy_prior(&truth, noise, &mut rng)?;
    let counts = simulated_counts(&network, &truth, &AssignConfig::default())?;
    Ok(GridFixture {
        network,
        truth,
        prior,
        counts,
    })
}

/// Link id of the bridge in [`bottleneck_network`].
pub const BRIDGE_LINK: LinkId = LinkId(4);

/// Two feeders merge and cross a three-lane 3600 veh/h bridge to a single
/// destination: every trip uses the bridge and there is no alternative.
pub fn bottleneck_network() -> Network {
    let nodes = (1..=5)
        .map(|i| Node {
            id: NodeId(i),
            x: i as f64 * 800.0,
            y: 0.0,
        })
        .collect();
    let link = |id, from, to, ff, cap, lanes| LinkSpec {
        id: LinkId(id),
        from: NodeId(from),
        to: NodeId(to),
        free_flow_time: ff,
        capacity: cap,
        lanes,
    };
    let links = vec![
        link(1, 1, 3, 90.0, 4000.0, 2),
        link(2, 2, 3, 90.0, 4000.0, 2),
        link(3, 3, 4, 60.0, 7200.0, 4),
        link(BRIDGE_LINK.0, 4, 5, 120.0, 3600.0, 3),
    ];
    let zones = vec![
        ZoneSpec { id: ZoneId(1), node: NodeId(1) },
        ZoneSpec { id: ZoneId(2), node: NodeId(2) },
        ZoneSpec { id: ZoneId(5), node: NodeId(5) },
    ];
    Network::new(nodes, links, zones).expect("bottleneck network is valid")
}

/// Grid of the incident benchmark: 09:45 start, four 15-minute intervals.
pub fn bottleneck_grid() -> TimeGrid {
    TimeGrid::new(parse_clock("09:45").expect("valid clock"), 900.0, 4)
}

/// Demand running 5 % above the bridge capacity in every interval, split
/// 60/40 between the two feeders.
pub fn bottleneck_demand(grid: TimeGrid) -> OdMatrixSeries {
    let per_interval = 3600.0 * 1.05 * grid.interval_length / 3600.0;
    let mut demand = OdMatrixSeries::zeros(grid, vec![(ZoneId(1), ZoneId(5)), (ZoneId(2), ZoneId(5))]);
    for t in 0..grid.num_intervals {
        demand.set(0, t, 0.6 * per_interval);
        demand.set(1, t, 0.4 * per_interval);
    }
    demand
}

/// `x_t = phi x_{t-1} + c + sigma e_t`, started at the stationary mean and
/// clamped at zero.
pub fn ar1_series(rng: &mut ChaCha8Rng, n: usize, phi: f64, c: f64, sigma: f64) -> Vec<f64> {
    let noise = Normal::new(0.0, sigma).expect("sigma must be finite and nonnegative");
    let mut x = if (phi - 1.0).abs() > 1e-12 { c / (1.0 - phi) } else { c };
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        x = phi * x + c + noise.sample(rng);
        out.push(x.max(0.0));
    }
    out
}

/// Parameters of an AR(1) fleet.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ar1Fleet {
    pub series: usize,
    pub length: usize,
    pub phi: f64,
    pub c: f64,
    pub sigma: f64,
}

impl Default for Ar1Fleet {
    fn default() -> Self {
        Ar1Fleet {
            series: 30,
            length: 200,
            phi: 0.6,
            c: 10.0,
            sigma: 1.0,
        }
    }
}

/// Fleet of independent AR(1) series labelled `(k, k + 1)` for zones
/// counted from 1.
pub fn ar1_fleet(params: &Ar1Fleet, rng: &mut ChaCha8Rng) -> Vec<DemandSeries> {
    (0..params.series)
        .map(|k| {
            let o = 2 * k as i64 + 1;
            DemandSeries {
                od_pair: (ZoneId(o), ZoneId(o + 1)),
                values: ar1_series(rng, params.length, params.phi, params.c, params.sigma),
                interval_length: 900.0,
            }
        })
        .collect()
}

/// Fleet as an OD matrix on a grid with one interval per value.
pub fn fleet_to_demand(fleet: &[DemandSeries], start: f64) -> Result<OdMatrixSeries, SynthError> {
    let first = fleet.first().ok_or_else(|| SynthError::Config("empty fleet".into()))?;
    let n = first.values.len();
    if fleet.iter().any(|s| s.values.len() != n) {
        return Err(SynthError::Config("fleet series differ in length".into()));
    }
    let grid = TimeGrid::new(start, first.interval_length, n);
    let pairs = fleet.iter().map(|s| s.od_pair).collect();
    let values = fleet.iter().flat_map(|s| s.values.iter().copied()).collect();
    Ok(OdMatrixSeries::from_values(grid, pairs, values)?)
}

/// Generator settings for [`write_fixtures`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    pub noise: f64,
    pub fleet: Ar1Fleet,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: DEFAULT_SEED,
            noise: 0.3,
            fleet: Ar1Fleet::default(),
        }
    }
}

/// Writes the full fixture set under `dir`:
///
/// ```text
/// grid/{nodes,links,zones}.csv  truth_demand.csv  prior_demand.csv  counts.csv
/// bottleneck/{nodes,links,zones}.csv  bottleneck/demand.csv
/// ar1_fleet.csv
/// ```
pub fn write_fixtures(dir: &Path, config: &SynthConfig) -> Result<(), SynthError> {
    let fixture = grid_fixture(config.seed, config.noise)?;
    let grid_dir = dir.join("grid");
    write_network(&grid_dir, &fixture.network)?;
    csvio::write_demand(&dir.join("truth_demand.csv"), &fixture.truth)?;
    csvio::write_demand(&dir.join("prior_demand.csv"), &fixture.prior)?;
    csvio::write_counts(&dir.join("counts.csv"), &fixture.network, &fixture.counts)?;

    let bottleneck = bottleneck_network();
    let bdir = dir.join("bottleneck");
    write_network(&bdir, &bottleneck)?;
    csvio::write_demand(&bdir.join("demand.csv"), &bottleneck_demand(bottleneck_grid()))?;

    // The fleet draws from its own stream so its content does not depend on
    // the grid fixture.
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let fleet = ar1_fleet(&config.fleet, &mut rng);
    csvio::write_demand(&dir.join("ar1_fleet.csv"), &fleet_to_demand(&fleet, 0.0)?)?;
    Ok(())
}

/// Seeded generator shared by callers that need extra draws.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corridor_shape() {
        let net = corridor_grid();
        assert_eq!(net.nodes().len(), 12);
        assert_eq!(net.num_links(), 2 * (5 + 5 + 6));
        assert_eq!(all_pairs(&net).len(), 12);
    }

    #[test]
    fn prior_noise_is_bounded_and_seeded() {
        let a = grid_fixture(7, 0.3).unwrap();
        let b = grid_fixture(7, 0.3).unwrap();
        assert_eq!(a.prior, b.prior);
        assert_eq!(a.counts, b.counts);
        for (p, t) in a.prior.values().iter().zip(a.truth.values()) {
            assert!(*p >= 0.7 * t - 1e-12 && *p <= 1.3 * t + 1e-12);
        }
        assert!(grid_fixture(8, 0.3).unwrap().prior != a.prior);
    }

    #[test]
    fn truth_simulates_cleanly() {
        let f = grid_fixture(DEFAULT_SEED, 0.3).unwrap();
        let sim = assign(&f.network, &f.truth, &AssignConfig::default()).unwrap();
        assert!(sim.vehicles_unfinished < 0.02 * sim.vehicles_released);
    }

    #[test]
    fn bottleneck_is_congested_at_baseline() {
        let net = bottleneck_network();
        let d = bottleneck_demand(bottleneck_grid());
        let sim = assign(&net, &d, &AssignConfig::default()).unwrap();
        assert!(sim.total_delay > 0.0);
        assert_eq!(sim.iterations, 1);
    }

    #[test]
    fn fleet_has_requested_shape() {
        let mut r = rng(1);
        let fleet = ar1_fleet(&Ar1Fleet { series: 5, length: 50, ..Default::default() }, &mut r);
        assert_eq!(fleet.len(), 5);
        assert!(fleet.iter().all(|s| s.values.len() == 50 && s.values.iter().all(|&v| v >= 0.0)));
        let m = fleet_to_demand(&fleet, 0.0).unwrap();
        assert_eq!(m.num_pairs(), 5);
        assert_eq!(m.series(2), fleet[2].values.as_slice());
    }
}
