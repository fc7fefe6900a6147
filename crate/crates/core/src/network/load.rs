use std::path::Path;

use serde::Deserialize;

use super::{LinkId, LinkSpec, Network, NetworkError, Node, NodeId, ZoneId, ZoneSpec};
use crate::csvio::{read_rows, CsvError};

pub const NODES_HEADER: &str = "node_id,x,y";
pub const LINKS_HEADER: &str = "link_id,from_node,to_node,free_flow_time_s,capacity_vph,lanes";
pub const ZONES_HEADER: &str = "zone_id,node_id";

impl From<CsvError> for NetworkError {
    fn from(err: CsvError) -> Self {
        match err {
            CsvError::Record {
                path,
                line,
                message,
            } => NetworkError::Parse {
                file: path,
                line,
                message,
            },
            CsvError::Header { ref path, .. } | CsvError::Empty { ref path } => {
                NetworkError::Parse {
                    file: path.clone(),
                    line: 1,
                    message: err.to_string(),
                }
            }
            other => NetworkError::Io(other.to_string()),
        }
    }
}

#[derive(Debug, Deserialize)]
struct NodeRow {
    node_id: i64,
    x: f64,
    y: f64,
}

#[derive(Debug, Deserialize)]
struct LinkRow {
    link_id: i64,
    from_node: i64,
    to_node: i64,
    free_flow_time_s: f64,
    capacity_vph: f64,
    lanes: u32,
}

#[derive(Debug, Deserialize)]
struct ZoneRow {
    zone_id: i64,
    node_id: i64,
}

pub fn read_nodes(path: &Path) -> Result<Vec<Node>, NetworkError> {
    Ok(read_rows::<NodeRow>(path, NODES_HEADER)?
        .into_iter()
        .map(|(_, r)| Node {
            id: NodeId(r.node_id),
            x: r.x,
            y: r.y,
        })
        .collect())
}

pub fn read_links(path: &Path) -> Result<Vec<LinkSpec>, NetworkError> {
    Ok(read_rows::<LinkRow>(path, LINKS_HEADER)?
        .into_iter()
        .map(|(_, r)| LinkSpec {
            id: LinkId(r.link_id),
            from: NodeId(r.from_node),
            to: NodeId(r.to_node),
            free_flow_time: r.free_flow_time_s,
            capacity: r.capacity_vph,
            lanes: r.lanes,
        })
        .collect())
}

pub fn read_zones(path: &Path) -> Result<Vec<ZoneSpec>, NetworkError> {
    Ok(read_rows::<ZoneRow>(path, ZONES_HEADER)?
        .into_iter()
        .map(|(_, r)| ZoneSpec {
            id: ZoneId(r.zone_id),
            node: NodeId(r.node_id),
        })
        .collect())
}

/// Loads and validates a network from its three CSV files.
pub fn load_network(
    nodes_file: &Path,
    links_file: &Path,
    zones_file: &Path,
) -> Result<Network, NetworkError> {
    Network::new(
        read_nodes(nodes_file)?,
        read_links(links_file)?,
        read_zones(zones_file)?,
    )
}

/// Writes the three network files into `dir`.
pub fn write_network(dir: &Path, network: &Network) -> Result<(), CsvError> {
    use crate::csvio::{fmt_f64, CsvSink};

    let mut nodes = CsvSink::create(&dir.join("nodes.csv"), NODES_HEADER)?;
    for node in network.nodes() {
        nodes.row([node.id.to_string(), fmt_f64(node.x), fmt_f64(node.y)])?;
    }
    nodes.finish()?;

    let mut links = CsvSink::create(&dir.join("links.csv"), LINKS_HEADER)?;
    for link in network.links() {
        links.row([
            link.id.to_string(),
            network.nodes()[link.from].id.to_string(),
            network.nodes()[link.to].id.to_string(),
            fmt_f64(link.free_flow_time),
            fmt_f64(link.capacity),
            link.lanes.to_string(),
        ])?;
    }
    links.finish()?;

    let mut zones = CsvSink::create(&dir.join("zones.csv"), ZONES_HEADER)?;
    for zone in network.zones() {
        zones.row([zone.id.to_string(), network.nodes()[zone.node].id.to_string()])?;
    }
    zones.finish()
}
