//! CSV readers and writers for every file the toolkit exchanges.
//!
//! Numbers are written with the shortest representation that parses back to
//! the identical `f64`, so a write/read cycle is lossless.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Deserialize;
use thiserror::Error;

use crate::estimation::{LinkCountSeries, TraceRow};
use crate::network::{LinkId, Network, TimeGrid, ZoneId};
use crate::simulator::{OdMatrixSeries, SimulationResult};

#[derive(Debug, Error)]
pub enum CsvError {
    #[error("{path}: file not found")]
    NotFound { path: String },
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("{path}: expected header `{expected}`, found `{found}`")]
    Header {
        path: String,
        expected: String,
        found: String,
    },
    #[error("{path}:{line}: {message}")]
    Record {
        path: String,
        line: u64,
        message: String,
    },
    #[error("{path}: no data rows")]
    Empty { path: String },
}

impl CsvError {
    fn io(path: &Path, err: impl std::fmt::Display) -> Self {
        CsvError::Io {
            path: path.display().to_string(),
            message: err.to_string(),
        }
    }

    fn record(path: &Path, line: u64, message: impl Into<String>) -> Self {
        CsvError::Record {
            path: path.display().to_string(),
            line,
            message: message.into(),
        }
    }
}

/// Reads a headed CSV file into typed rows, each tagged with its 1-based
/// line number.
pub fn read_rows<T: DeserializeOwned>(
    path: &Path,
    header: &str,
) -> Result<Vec<(u64, T)>, CsvError> {
    let file = File::open(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            CsvError::NotFound {
                path: path.display().to_string(),
            }
        } else {
            CsvError::io(path, e)
        }
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(file);
    let found = reader
        .headers()
        .map_err(|e| CsvError::io(path, e))?
        .iter()
        .collect::<Vec<_>>()
        .join(",");
    if found != header {
        return Err(CsvError::Header {
            path: path.display().to_string(),
            expected: header.to_string(),
            found,
        });
    }
    let headers = reader.headers().map_err(|e| CsvError::io(path, e))?.clone();
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            CsvError::record(path, line, e.to_string())
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let row = record.deserialize::<T>(Some(&headers)).map_err(|e| {
            let message = match e.kind() {
                csv::ErrorKind::Deserialize { err, .. } => err.to_string(),
                _ => e.to_string(),
            };
            CsvError::record(path, line, message)
        })?;
        rows.push((line, row));
    }
    Ok(rows)
}

/// Formats a float so that parsing the text yields the same value.
pub fn fmt_f64(value: f64) -> String {
    if value == 0.0 {
        // Normalize negative zero.
        "0".to_string()
    } else {
        format!("{value}")
    }
}

/// Minimal CSV writer: header plus rows of preformatted fields.
pub struct CsvSink {
    writer: csv::Writer<File>,
    path: String,
}

impl CsvSink {
    pub fn create(path: &Path, header: &str) -> Result<Self, CsvError> {
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent).map_err(|e| CsvError::io(path, e))?;
            }
        }
        let file = File::create(path).map_err(|e| CsvError::io(path, e))?;
        let mut writer = csv::WriterBuilder::new().from_writer(file);
        writer
            .write_record(header.split(','))
            .map_err(|e| CsvError::io(path, e))?;
        Ok(CsvSink {
            writer,
            path: path.display().to_string(),
        })
    }

    pub fn row<I, S>(&mut self, fields: I) -> Result<(), CsvError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.writer.write_record(fields).map_err(|e| CsvError::Io {
            path: self.path.clone(),
            message: e.to_string(),
        })
    }

    pub fn finish(mut self) -> Result<(), CsvError> {
        self.writer.flush().map_err(|e| CsvError::Io {
            path: self.path.clone(),
            message: e.to_string(),
        })
    }
}

pub const DEMAND_HEADER: &str = "origin_zone,dest_zone,interval,trips";
pub const COUNTS_HEADER: &str = "link_id,interval,count_veh";
pub const FLOWS_HEADER: &str = "link_id,interval,flow_veh";
pub const PROPORTIONS_HEADER: &str =
    "link_id,od_origin,od_dest,interval_h,interval_t,proportion";
pub const TRACE_HEADER: &str = "iteration,objective,r_squared";
pub const FORECAST_HEADER: &str = "origin_zone,dest_zone,interval,predicted_trips";
pub const SELECTION_HEADER: &str = "spec,nrmse,r_squared";
pub const SCATTER_HEADER: &str = "link_id,interval,observed,simulated_before,simulated_after";
pub const INCIDENT_HEADER: &str =
    "scenario,duration_s,capacity_factor,avg_delay_s,delay_ratio_vs_baseline,min_throughput_vph";

#[derive(Debug, Deserialize)]
struct DemandRow {
    origin_zone: i64,
    dest_zone: i64,
    interval: usize,
    trips: f64,
}

/// Demand rows keyed by OD pair, each holding `(interval, trips)` with
/// 1-based intervals as written in the file.
pub type DemandTable = BTreeMap<(ZoneId, ZoneId), Vec<(usize, f64)>>;

/// Reads a demand file without imposing a time grid.
pub fn read_demand_table(path: &Path) -> Result<DemandTable, CsvError> {
    let rows = read_rows::<DemandRow>(path, DEMAND_HEADER)?;
    if rows.is_empty() {
        return Err(CsvError::Empty {
            path: path.display().to_string(),
        });
    }
    let mut table = DemandTable::new();
    for (line, row) in rows {
        if row.interval == 0 {
            return Err(CsvError::record(path, line, "intervals are numbered from 1"));
        }
        if !(row.trips >= 0.0) || !row.trips.is_finite() {
            return Err(CsvError::record(path, line, "trips must be finite and nonnegative"));
        }
        if row.origin_zone == row.dest_zone {
            return Err(CsvError::record(path, line, "origin equals destination"));
        }
        let entry = table
            .entry((ZoneId(row.origin_zone), ZoneId(row.dest_zone)))
            .or_default();
        if entry.iter().any(|&(t, _)| t == row.interval) {
            return Err(CsvError::record(path, line, "duplicate OD/interval entry"));
        }
        entry.push((row.interval, row.trips));
    }
    for series in table.values_mut() {
        series.sort_by_key(|&(t, _)| t);
    }
    Ok(table)
}

/// Largest interval index present in a demand table (1-based).
pub fn demand_table_intervals(table: &DemandTable) -> usize {
    table
        .values()
        .flat_map(|s| s.iter().map(|&(t, _)| t))
        .max()
        .unwrap_or(0)
}

/// Reads a demand file onto `grid`. Missing entries are zero.
pub fn read_demand(path: &Path, grid: TimeGrid) -> Result<OdMatrixSeries, CsvError> {
    let table = read_demand_table(path)?;
    let last = demand_table_intervals(&table);
    if last > grid.num_intervals {
        return Err(CsvError::Io {
            path: path.display().to_string(),
            message: format!(
                "interval {last} exceeds the time grid ({} intervals)",
                grid.num_intervals
            ),
        });
    }
    let pairs: Vec<_> = table.keys().copied().collect();
    let mut demand = OdMatrixSeries::zeros(grid, pairs);
    for (p, series) in table.values().enumerate() {
        for &(t, trips) in series {
            demand.set(p, t - 1, trips);
        }
    }
    Ok(demand)
}

pub fn write_demand(path: &Path, demand: &OdMatrixSeries) -> Result<(), CsvError> {
    let mut sink = CsvSink::create(path, DEMAND_HEADER)?;
    for (p, &(o, d)) in demand.pairs().iter().enumerate() {
        for t in 0..demand.num_intervals() {
            sink.row([
                o.to_string(),
                d.to_string(),
                (t + 1).to_string(),
                fmt_f64(demand.get(p, t)),
            ])?;
        }
    }
    sink.finish()
}

#[derive(Debug, Deserialize)]
struct CountRow {
    link_id: i64,
    interval: usize,
    count_veh: f64,
}

/// Reads link counts; intervals must fall inside `grid`, links inside `network`.
pub fn read_counts(
    path: &Path,
    network: &Network,
    grid: TimeGrid,
) -> Result<LinkCountSeries, CsvError> {
    let rows = read_rows::<CountRow>(path, COUNTS_HEADER)?;
    if rows.is_empty() {
        return Err(CsvError::Empty {
            path: path.display().to_string(),
        });
    }
    let mut counts = LinkCountSeries::new(grid);
    for (line, row) in rows {
        if row.interval == 0 || row.interval > grid.num_intervals {
            return Err(CsvError::record(path, line, "interval outside the time grid"));
        }
        let link = network
            .link_idx(LinkId(row.link_id))
            .map_err(|e| CsvError::record(path, line, e.to_string()))?;
        counts
            .insert(link, row.interval - 1, row.count_veh)
            .map_err(|e| CsvError::record(path, line, e.to_string()))?;
    }
    Ok(counts)
}

pub fn write_counts(
    path: &Path,
    network: &Network,
    counts: &LinkCountSeries,
) -> Result<(), CsvError> {
    let mut sink = CsvSink::create(path, COUNTS_HEADER)?;
    for (&(link, h), &value) in counts.entries() {
        sink.row([
            network.link(link).id.to_string(),
            (h + 1).to_string(),
            fmt_f64(value),
        ])?;
    }
    sink.finish()
}

pub fn write_flows(
    path: &Path,
    network: &Network,
    result: &SimulationResult,
) -> Result<(), CsvError> {
    let mut sink = CsvSink::create(path, FLOWS_HEADER)?;
    for (a, link) in network.links().iter().enumerate() {
        for h in 0..result.num_intervals() {
            sink.row([
                link.id.to_string(),
                (h + 1).to_string(),
                fmt_f64(result.link_flow(a, h)),
            ])?;
        }
    }
    sink.finish()
}

#[derive(Debug, Deserialize)]
struct FlowRow {
    link_id: i64,
    interval: usize,
    flow_veh: f64,
}

/// Reads a flows file back as `(link_id, interval, flow)` triples.
pub fn read_flows(path: &Path) -> Result<Vec<(LinkId, usize, f64)>, CsvError> {
    Ok(read_rows::<FlowRow>(path, FLOWS_HEADER)?
        .into_iter()
        .map(|(_, r)| (LinkId(r.link_id), r.interval, r.flow_veh))
        .collect())
}

pub fn write_proportions(
    path: &Path,
    network: &Network,
    demand: &OdMatrixSeries,
    result: &SimulationResult,
) -> Result<(), CsvError> {
    let mut sink = CsvSink::create(path, PROPORTIONS_HEADER)?;
    for entry in result.proportions.entries() {
        if entry.value == 0.0 {
            continue;
        }
        let (o, d) = demand.pairs()[entry.pair];
        sink.row([
            network.link(entry.link).id.to_string(),
            o.to_string(),
            d.to_string(),
            (entry.crossing + 1).to_string(),
            (entry.departure + 1).to_string(),
            fmt_f64(entry.value),
        ])?;
    }
    sink.finish()
}

pub fn write_trace(path: &Path, trace: &[TraceRow]) -> Result<(), CsvError> {
    let mut sink = CsvSink::create(path, TRACE_HEADER)?;
    for row in trace {
        sink.row([
            row.iteration.to_string(),
            fmt_f64(row.objective),
            fmt_f64(row.r_squared),
        ])?;
    }
    sink.finish()
}

#[derive(Debug, Deserialize)]
struct TraceCsvRow {
    iteration: usize,
    objective: f64,
    r_squared: f64,
}

/// Reads a trace file as `(iteration, objective, r_squared)`.
pub fn read_trace(path: &Path) -> Result<Vec<(usize, f64, f64)>, CsvError> {
    Ok(read_rows::<TraceCsvRow>(path, TRACE_HEADER)?
        .into_iter()
        .map(|(_, r)| (r.iteration, r.objective, r.r_squared))
        .collect())
}

/// Writes forecasts; `first_interval` is the 1-based label of the first
/// predicted interval.
pub fn write_forecast(
    path: &Path,
    forecasts: &BTreeMap<(ZoneId, ZoneId), Vec<f64>>,
    first_interval: usize,
) -> Result<(), CsvError> {
    let mut sink = CsvSink::create(path, FORECAST_HEADER)?;
    for (&(o, d), values) in forecasts {
        for (k, &v) in values.iter().enumerate() {
            sink.row([
                o.to_string(),
                d.to_string(),
                (first_interval + k).to_string(),
                fmt_f64(v),
            ])?;
        }
    }
    sink.finish()
}

#[derive(Debug, Deserialize)]
struct ForecastRow {
    origin_zone: i64,
    dest_zone: i64,
    interval: usize,
    predicted_trips: f64,
}

/// Reads forecast rows as `((origin, dest), interval, trips)`.
pub fn read_forecast(path: &Path) -> Result<Vec<((ZoneId, ZoneId), usize, f64)>, CsvError> {
    Ok(read_rows::<ForecastRow>(path, FORECAST_HEADER)?
        .into_iter()
        .map(|(_, r)| {
            (
                (ZoneId(r.origin_zone), ZoneId(r.dest_zone)),
                r.interval,
                r.predicted_trips,
            )
        })
        .collect())
}

/// Writes free-form text, creating parent directories as needed.
pub fn write_text(path: &Path, text: &str) -> Result<(), CsvError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| CsvError::io(path, e))?;
        }
    }
    let mut file = File::create(path).map_err(|e| CsvError::io(path, e))?;
    file.write_all(text.as_bytes())
        .map_err(|e| CsvError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn float_text_round_trips(v in proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO) {
            let parsed: f64 = fmt_f64(v).parse().unwrap();
            prop_assert_eq!(parsed, if v == 0.0 { 0.0 } else { v });
        }
    }

    #[test]
    fn demand_table_rejects_bad_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        std::fs::write(&path, "origin_zone,dest_zone,interval,trips\n1,2,1,5\n1,2,0,3\n").unwrap();
        let err = read_demand_table(&path).unwrap_err();
        assert!(matches!(err, CsvError::Record { line: 3, .. }), "{err}");

        std::fs::write(&path, "origin_zone,dest_zone,interval,trips\n1,2,1,-1\n").unwrap();
        assert!(read_demand_table(&path).is_err());

        std::fs::write(&path, "origin,dest,interval,trips\n1,2,1,1\n").unwrap();
        assert!(matches!(read_demand_table(&path), Err(CsvError::Header { .. })));

        std::fs::write(&path, "origin_zone,dest_zone,interval,trips\n").unwrap();
        assert!(matches!(read_demand_table(&path), Err(CsvError::Empty { .. })));

        let missing = dir.path().join("missing.csv");
        assert!(matches!(
            read_demand_table(&missing),
            Err(CsvError::NotFound { .. })
        ));
    }
}
