//! Command-line driver for demand estimation, forecasting and incident
//! analysis. The `tripflow` binary is a thin wrapper around [`run`].

mod commands;
mod output;
mod settings;

use std::path::PathBuf;
use std::ffi::OsString;

use clap::{Parser, Subcommand};
use thiserror::Error;

pub use settings::Settings;
use tripflow_core::estimation::EstimationError;
use tripflow_core::forecast::ForecastError;
use tripflow_core::incident::IncidentError;
use tripflow_core::simulator::SimulatorError;
use tripflow_core::synth::SynthError;

/// Bad flags, settings or config files.
#[derive(Debug, Error)]
#[error("{0}")]
pub struct UsageError(pub String);

/// A computation that produced no usable number.
#[derive(Debug, Error)]
#[error("{0}")]
pub struct NumericalError(pub String);

#[derive(Parser)]
#[command(name = "tripflow", version, about = "OD demand estimation, forecasting and incident analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct RunArgs {
    /// Config file of `key = value` lines; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    settings: Settings,
}

#[derive(Subcommand)]
enum Command {
    /// Run the dynamic assignment and write link flows.
    Simulate(RunArgs),
    /// Adjust a prior demand to observed link counts.
    Estimate(RunArgs),
    /// Predict the next intervals of every OD series.
    Forecast(RunArgs),
    /// Compare incident scenarios against the undisturbed network.
    Incident(RunArgs),
    /// Generate the synthetic benchmark fixtures.
    Synth(RunArgs),
    /// Estimate, forecast, then analyse incidents on the forecast demand.
    Pipeline(RunArgs),
}

pub const USAGE: u8 = 1;
pub const DATA: u8 = 2;
pub const NUMERICAL: u8 = 3;

fn classify(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return USAGE;
        }
        if cause.is::<NumericalError>() {
            return NUMERICAL;
        }
        if let Some(e) = cause.downcast_ref::<ForecastError>() {
            return forecast_code(e);
        }
        if let Some(e) = cause.downcast_ref::<EstimationError>() {
            return match e {
                EstimationError::Config(_) => USAGE,
                EstimationError::Simulator(SimulatorError::Config(_)) => USAGE,
                _ => DATA,
            };
        }
        if let Some(SimulatorError::Config(_)) = cause.downcast_ref::<SimulatorError>() {
            return USAGE;
        }
        if let Some(e) = cause.downcast_ref::<IncidentError>() {
            return match e {
                IncidentError::InvalidScenario { .. } | IncidentError::NoDurations => USAGE,
                IncidentError::Simulator(SimulatorError::Config(_)) => USAGE,
                _ => DATA,
            };
        }
        if let Some(SynthError::Config(_)) = cause.downcast_ref::<SynthError>() {
            return USAGE;
        }
    }
    DATA
}

fn forecast_code(e: &ForecastError) -> u8 {
    match e {
        ForecastError::InvalidSpec(_) | ForecastError::InvalidValidation(_) => USAGE,
        ForecastError::Singular | ForecastError::Metrics(_) => NUMERICAL,
        _ => DATA,
    }
}

/// Runs one command line (program name first) and returns the exit code.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { USAGE } else { 0 };
        }
    };
    let (name, args, command): (&str, RunArgs, fn(&Settings) -> anyhow::Result<()>) = match cli.command {
        Command::Simulate(a) => ("simulate", a, commands::simulate),
        Command::Estimate(a) => ("estimate", a, commands::estimate),
        Command::Forecast(a) => ("forecast", a, commands::forecast),
        Command::Incident(a) => ("incident", a, commands::incident),
        Command::Synth(a) => ("synth", a, commands::synth),
        Command::Pipeline(a) => ("pipeline", a, commands::pipeline),
    };
    match resolve(args).and_then(|s| command(&s)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("tripflow {name}: {e:#}");
            classify(&e)
        }
    }
}

fn resolve(args: RunArgs) -> anyhow::Result<Settings> {
    let file = match &args.config {
        Some(path) => Settings::from_file(path)?,
        None => Settings::default(),
    };
    Ok(args.settings.or(file).with_defaults())
}
