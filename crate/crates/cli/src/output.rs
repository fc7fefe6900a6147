use std::fmt::Write as _;
use std::path::Path;

use anyhow::Result;
use tripflow_core::csvio::{fmt_f64, write_text, CsvSink, SCATTER_HEADER, SELECTION_HEADER};
use tripflow_core::estimation::{EstimationResult, LinkCountSeries};
use tripflow_core::forecast::SelectionReport;
use tripflow_core::incident::{delay_ratio, ScenarioOutcome};
use tripflow_core::metrics::FitReport;
use tripflow_core::network::Network;

use crate::settings::Settings;

pub const REPORT_FILE: &str = "run_report.txt";

/// Plain-text run report. Holds only numbers derived from the inputs, so
/// two runs with the same settings write the same bytes.
pub struct Report {
    text: String,
}

impl Report {
    pub fn new(command: &str, settings: &Settings) -> Report {
        let mut text = format!(
            "tripflow {}\ncommand = {command}\n\n[config]\n{}",
            env!("CARGO_PKG_VERSION"),
            settings.echo()
        );
        text.push('\n');
        Report { text }
    }

    pub fn section(&mut self, title: &str) {
        let _ = writeln!(self.text, "[{title}]");
    }

    pub fn kv(&mut self, key: &str, value: impl std::fmt::Display) {
        let _ = writeln!(self.text, "{key} = {value}");
    }

    pub fn num(&mut self, key: &str, value: f64) {
        self.kv(key, fmt_f64(value));
    }

    pub fn line(&mut self, line: &str) {
        self.text.push_str(line);
        self.text.push('\n');
    }

    pub fn fit(&mut self, key: &str, fit: &FitReport) {
        let opt = |v: Option<f64>| v.map_or("undefined".to_string(), fmt_f64);
        self.kv(
            key,
            format!(
                "r_squared {} nrmse {} rmse {} points {}",
                opt(fit.r_squared),
                opt(fit.nrmse),
                fmt_f64(fit.rmse),
                fit.n_points
            ),
        );
    }

    pub fn end_section(&mut self) {
        self.text.push('\n');
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        write_text(&dir.join(REPORT_FILE), &self.text)?;
        Ok(())
    }
}

/// Observed counts next to the flows simulated from the prior and from the
/// estimate, one row per count.
pub fn write_scatter(
    path: &Path,
    network: &Network,
    counts: &LinkCountSeries,
    result: &EstimationResult,
) -> Result<()> {
    let mut sink = CsvSink::create(path, SCATTER_HEADER)?;
    for (&(link, h), &observed) in counts.entries() {
        sink.row([
            network.link(link).id.to_string(),
            (h + 1).to_string(),
            fmt_f64(observed),
            fmt_f64(result.initial_simulation.link_flow(link, h)),
            fmt_f64(result.final_simulation.link_flow(link, h)),
        ])?;
    }
    sink.finish()?;
    Ok(())
}

pub fn write_selection(path: &Path, report: &SelectionReport) -> Result<()> {
    let mut sink = CsvSink::create(path, SELECTION_HEADER)?;
    for row in &report.rows {
        sink.row([
            row.candidate.to_string(),
            fmt_f64(row.nrmse),
            row.r_squared.map(fmt_f64).unwrap_or_default(),
        ])?;
    }
    sink.finish()?;
    Ok(())
}

pub fn incident_table(report: &mut Report, outcomes: &[ScenarioOutcome]) {
    let base = outcomes.first().map_or(0.0, |o| o.average_delay);
    report.line("scenario duration_s capacity_factor avg_delay_s delay_ratio min_throughput_vph unfinished gridlocked");
    for o in outcomes {
        let (name, duration, factor) = match &o.scenario {
            Some(s) => (s.name.as_str(), s.duration, s.capacity_factor),
            None => ("baseline", 0.0, 1.0),
        };
        report.line(&format!(
            "{name} {} {} {} {} {} {} {}",
            fmt_f64(duration),
            fmt_f64(factor),
            fmt_f64(o.average_delay),
            fmt_f64(delay_ratio(o.average_delay, base)),
            fmt_f64(o.min_throughput()),
            fmt_f64(o.vehicles_unfinished),
            o.gridlocked
        ));
    }
}
