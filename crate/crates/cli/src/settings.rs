//! Run settings shared by every subcommand.
//!
//! The same keys appear in the config file (snake_case) and on the command
//! line (`--kebab-case`, with the snake_case spelling accepted as an alias).
//! A flag always wins over the file.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use serde::{Deserialize, Serialize};

use crate::UsageError;

macro_rules! settings {
    ($( $(#[$doc:meta])* $name:ident : $ty:ty $(= $alias:literal)? ),* $(,)?) => {
        #[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
        #[serde(deny_unknown_fields)]
        pub struct Settings {
            $(
                $(#[$doc])*
                #[arg(long $(, alias = $alias)?)]
                #[serde(default, skip_serializing_if = "Option::is_none")]
                pub $name: Option<$ty>,
            )*
        }

        impl Settings {
            /// Keeps every value set here and takes the rest from `other`.
            pub fn or(self, other: Settings) -> Settings {
                Settings { $( $name: self.$name.or(other.$name), )* }
            }
        }
    };
}

settings! {
    /// Directory holding nodes.csv, links.csv and zones.csv.
    network_dir: PathBuf = "network_dir",
    /// Demand file (the prior for estimation, the history for forecasting).
    demand: PathBuf,
    /// Observed link counts.
    counts: PathBuf,
    output_dir: PathBuf = "output_dir",
    /// Clock time (HH:MM) at the start of interval 1.
    start_time: String = "start_time",
    interval_length_s: f64 = "interval_length_s",
    /// Number of intervals; taken from the demand file when absent.
    num_intervals: usize = "num_intervals",
    tick_s: f64 = "tick_s",
    max_assign_iterations: usize = "max_assign_iterations",
    gap_tolerance: f64 = "gap_tolerance",
    /// Write proportions.csv next to flows.csv.
    #[arg(num_args = 0..=1, default_missing_value = "true")]
    dump_proportions: bool = "dump_proportions",
    omega: f64,
    max_outer_iterations: usize = "max_outer_iterations",
    r2_variation_tolerance: f64 = "r2_variation_tolerance",
    max_gradient_steps: usize = "max_gradient_steps",
    step_tolerance: f64 = "step_tolerance",
    gridlock_share: f64 = "gridlock_share",
    /// Centre of the R² denominator: `simulated` or `observed`.
    r2_mean: String = "r2_mean",
    /// ARIMA order as `p,d,q`.
    spec: String,
    steps: usize,
    /// Score the candidate list and forecast with the winner.
    #[arg(num_args = 0..=1, default_missing_value = "true")]
    select: bool,
    /// Candidate orders separated by `;`, e.g. `1,0,0;0,1,1`.
    candidates: String,
    validation_intervals: usize = "validation_intervals",
    /// TOML file with one `[[scenario]]` table per incident.
    scenario_file: PathBuf = "scenario_file",
    watched_link: i64 = "watched_link",
    /// Affected link ids separated by `,`.
    link_ids: String = "link_ids",
    /// Clock time (HH:MM) at which the incident starts.
    incident_start: String = "incident_start",
    duration_s: f64 = "duration_s",
    /// Several durations separated by `,` for a sweep.
    durations_s: String = "durations_s",
    capacity_factor: f64 = "capacity_factor",
    lanes_blocked: u32 = "lanes_blocked",
    seed: u64,
    noise: f64,
    /// Number of series in the generated AR(1) fleet.
    od_pairs: usize = "od_pairs",
    fleet_length: usize = "fleet_length",
}

pub const DEFAULT_CANDIDATES: &str = "1,0,0;1,1,0;0,0,1;0,1,1";

impl Settings {
    /// Reads a config file; relative paths inside it are taken relative to
    /// the file's directory.
    pub fn from_file(path: &Path) -> Result<Settings> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            UsageError(format!("cannot read config file {}: {e}", path.display()))
        })?;
        let mut s: Settings = toml::from_str(&text)
            .map_err(|e| UsageError(format!("config file {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [
            &mut s.network_dir,
            &mut s.demand,
            &mut s.counts,
            &mut s.output_dir,
            &mut s.scenario_file,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(s)
    }

    /// Fills the keys that have defaults.
    pub fn with_defaults(self) -> Settings {
        let defaults = Settings {
            output_dir: Some(PathBuf::from("out")),
            start_time: Some("06:00".into()),
            interval_length_s: Some(900.0),
            tick_s: Some(10.0),
            max_assign_iterations: Some(50),
            gap_tolerance: Some(1e-3),
            dump_proportions: Some(false),
            omega: Some(0.9),
            max_outer_iterations: Some(20),
            r2_variation_tolerance: Some(1e-3),
            max_gradient_steps: Some(10_000),
            step_tolerance: Some(1e-9),
            gridlock_share: Some(0.1),
            r2_mean: Some("simulated".into()),
            spec: Some("1,0,0".into()),
            steps: Some(2),
            select: Some(false),
            candidates: Some(DEFAULT_CANDIDATES.into()),
            validation_intervals: Some(2),
            seed: Some(tripflow_core::synth::DEFAULT_SEED),
            noise: Some(0.3),
            od_pairs: Some(30),
            fleet_length: Some(200),
            ..Settings::default()
        };
        self.or(defaults)
    }

    /// The settings as config-file text, enough to rerun the command.
    pub fn echo(&self) -> String {
        toml::to_string(self).expect("settings serialize")
    }
}

/// Unwraps a key that the command needs.
pub fn required<'a, T>(value: &'a Option<T>, key: &str) -> Result<&'a T> {
    value
        .as_ref()
        .ok_or_else(|| UsageError(format!("missing required setting `{key}`")).into())
}

/// Parses a separated list, reporting the key on failure.
pub fn parse_list<T: std::str::FromStr>(text: &str, sep: char, key: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    text.split(sep)
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<T>()
                .map_err(|e| anyhow::Error::from(UsageError(format!("`{key}` entry `{s}`: {e}"))))
        })
        .collect::<Result<Vec<T>>>()
        .with_context(|| format!("parsing `{key}`"))
}
