use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde::Deserialize;

use tripflow_core::csvio::{self, read_demand_table, demand_table_intervals};
use tripflow_core::estimation::{bilevel_estimate, EstimationConfig, EstimationResult, LinkCountSeries};
use tripflow_core::forecast::{
    fit_fleet, fleet_from_demand, naive_forecast, select_model, ArimaSpec, Candidate, DemandSeries,
};
use tripflow_core::incident::{run_incident_analysis, write_incident_report, IncidentConfig, IncidentScenario};
use tripflow_core::metrics::{FitReport, MeanMode};
use tripflow_core::network::{load_network, parse_clock, LinkId, Network, TimeGrid, ZoneId};
use tripflow_core::simulator::{assign, AssignConfig, LoadingConfig, OdMatrixSeries};
use tripflow_core::synth::{write_fixtures, Ar1Fleet, SynthConfig};

use crate::output::{incident_table, write_scatter, write_selection, Report};
use crate::settings::{parse_list, required, Settings};
use crate::{NumericalError, UsageError};

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn output_dir(s: &Settings) -> Result<PathBuf> {
    let dir = required(&s.output_dir, "output_dir")?.clone();
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn clock(text: &str, key: &str) -> Result<f64> {
    parse_clock(text).map_err(|e| usage(format!("`{key}`: {e}")))
}

fn load_net(s: &Settings) -> Result<Network> {
    let dir = required(&s.network_dir, "network_dir")?;
    Ok(load_network(
        &dir.join("nodes.csv"),
        &dir.join("links.csv"),
        &dir.join("zones.csv"),
    )?)
}

/// Time grid from the settings, with the interval count taken from the
/// demand file unless given.
fn time_grid(s: &Settings, demand: &Path) -> Result<TimeGrid> {
    let start = clock(required(&s.start_time, "start_time")?, "start_time")?;
    let length = *required(&s.interval_length_s, "interval_length_s")?;
    if !(length > 0.0) || !length.is_finite() {
        return Err(usage("`interval_length_s` must be positive"));
    }
    let n = match s.num_intervals {
        Some(n) => n,
        None => demand_table_intervals(&read_demand_table(demand)?),
    };
    if n == 0 {
        return Err(usage("`num_intervals` must be at least 1"));
    }
    Ok(TimeGrid::new(start, length, n))
}

fn assign_config(s: &Settings) -> Result<AssignConfig> {
    Ok(AssignConfig {
        max_iterations: *required(&s.max_assign_iterations, "max_assign_iterations")?,
        gap_tolerance: *required(&s.gap_tolerance, "gap_tolerance")?,
        loading: LoadingConfig {
            tick: *required(&s.tick_s, "tick_s")?,
        },
    })
}

fn estimation_config(s: &Settings) -> Result<EstimationConfig> {
    let r2_mode = match required(&s.r2_mean, "r2_mean")?.as_str() {
        "simulated" => MeanMode::Simulated,
        "observed" => MeanMode::Observed,
        other => return Err(usage(format!("`r2_mean` must be `simulated` or `observed`, not `{other}`"))),
    };
    Ok(EstimationConfig {
        omega: *required(&s.omega, "omega")?,
        max_outer_iterations: *required(&s.max_outer_iterations, "max_outer_iterations")?,
        r2_variation_tolerance: *required(&s.r2_variation_tolerance, "r2_variation_tolerance")?,
        max_gradient_steps: *required(&s.max_gradient_steps, "max_gradient_steps")?,
        step_tolerance: *required(&s.step_tolerance, "step_tolerance")?,
        gridlock_share: *required(&s.gridlock_share, "gridlock_share")?,
        r2_mode,
        assignment: assign_config(s)?,
    })
}

fn timed<T>(stage: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let started = Instant::now();
    let out = f()?;
    log::info!("{stage} finished in {:.2?}", started.elapsed());
    Ok(out)
}

pub fn simulate(s: &Settings) -> Result<()> {
    let network = load_net(s)?;
    let demand_path = required(&s.demand, "demand")?;
    let grid = time_grid(s, demand_path)?;
    let demand = csvio::read_demand(demand_path, grid)?;
    let config = assign_config(s)?;
    let result = timed("simulate", || Ok(assign(&network, &demand, &config)?))?;

    let out = output_dir(s)?;
    csvio::write_flows(&out.join("flows.csv"), &network, &result)?;
    if s.dump_proportions == Some(true) {
        csvio::write_proportions(&out.join("proportions.csv"), &network, &demand, &result)?;
    }
    let gridlock_share = *required(&s.gridlock_share, "gridlock_share")?;
    let mut report = Report::new("simulate", s);
    report.section("simulation");
    report.kv("msa_iterations", result.iterations);
    report.num("relative_gap", result.relative_gap);
    report.num("vehicles_released", result.vehicles_released);
    report.num("vehicles_unfinished", result.vehicles_unfinished);
    report.num("total_travel_time_s", result.total_travel_time);
    report.num("total_delay_s", result.total_delay);
    report.num("average_delay_s", result.average_delay());
    report.kv("gridlocked", result.is_gridlocked(gridlock_share));
    report.write(&out)
}

struct Estimated {
    network: Network,
    result: EstimationResult,
}

fn estimate_stage(s: &Settings, out: &Path, report: &mut Report) -> Result<Estimated> {
    let config = estimation_config(s)?;
    config.validate()?;
    let network = load_net(s)?;
    let prior_path = required(&s.demand, "demand")?;
    let counts_path = required(&s.counts, "counts")?;
    let grid = time_grid(s, prior_path)?;
    let prior = csvio::read_demand(prior_path, grid)?;
    let counts = csvio::read_counts(counts_path, &network, grid)?;
    let result = timed("estimate", || Ok(bilevel_estimate(&network, &prior, &counts, &config)?))?;

    csvio::write_demand(&out.join("estimated_demand.csv"), &result.estimated_demand)?;
    csvio::write_trace(&out.join("convergence_trace.csv"), &result.trace)?;
    write_scatter(&out.join("scatter.csv"), &network, &counts, &result)?;

    report.section("estimation");
    report.kv("stop_reason", format!("{:?}", result.stop_reason));
    report.kv("outer_iterations", result.trace.len());
    report.kv("best_iteration", result.best_iteration);
    report.num("best_r_squared", result.best_r_squared());
    report.num("final_objective", result.final_objective());
    report.kv("gridlock", result.gridlock);
    report.kv("non_unique", result.non_unique);
    let (before, after) = scatter_fit(&counts, &result)?;
    report.fit("fit_prior", &before);
    report.fit("fit_estimate", &after);
    report.line("iteration objective demand_term count_term r_squared upper_steps vehicles_unfinished");
    for row in &result.trace {
        report.line(&format!(
            "{} {} {} {} {} {} {}",
            row.iteration,
            csvio::fmt_f64(row.objective),
            csvio::fmt_f64(row.terms.demand),
            csvio::fmt_f64(row.terms.count),
            csvio::fmt_f64(row.r_squared),
            row.upper_steps,
            csvio::fmt_f64(row.vehicles_unfinished)
        ));
    }
    report.end_section();
    Ok(Estimated { network, result })
}

fn scatter_fit(counts: &LinkCountSeries, result: &EstimationResult) -> Result<(FitReport, FitReport)> {
    let observed = counts.values();
    let before: Vec<f64> = counts
        .entries()
        .keys()
        .map(|&(a, h)| result.initial_simulation.link_flow(a, h))
        .collect();
    let after: Vec<f64> = counts
        .entries()
        .keys()
        .map(|&(a, h)| result.final_simulation.link_flow(a, h))
        .collect();
    Ok((FitReport::new(&observed, &before)?, FitReport::new(&observed, &after)?))
}

pub fn estimate(s: &Settings) -> Result<()> {
    let out = output_dir(s)?;
    let mut report = Report::new("estimate", s);
    estimate_stage(s, &out, &mut report)?;
    report.write(&out)
}

struct ForecastPlan {
    steps: usize,
    spec: ArimaSpec,
    select: bool,
    candidates: Vec<ArimaSpec>,
    validation: usize,
}

/// Forecast settings, checked before any data is read.
fn forecast_plan(s: &Settings) -> Result<ForecastPlan> {
    let steps = *required(&s.steps, "steps")?;
    if steps == 0 {
        return Err(usage("`steps` must be at least 1"));
    }
    let spec: ArimaSpec = required(&s.spec, "spec")?.parse()?;
    let select = s.select == Some(true);
    let candidates = if select {
        parse_list(required(&s.candidates, "candidates")?, ';', "candidates")?
    } else {
        vec![spec]
    };
    Ok(ForecastPlan {
        steps,
        spec,
        select,
        candidates,
        validation: *required(&s.validation_intervals, "validation_intervals")?,
    })
}

/// Forecasts every series and writes forecast.csv and selection_report.csv.
/// Returns the predictions keyed by OD pair.
fn forecast_stage(
    plan: &ForecastPlan,
    fleet: &[DemandSeries],
    first_interval: usize,
    out: &Path,
    report: &mut Report,
) -> Result<BTreeMap<(ZoneId, ZoneId), Vec<f64>>> {
    let &ForecastPlan { steps, spec, select, validation, .. } = plan;
    let candidates = &plan.candidates;
    let selection = timed("model selection", || Ok(select_model(fleet, candidates, validation)?))?;
    let chosen = if select { selection.winner } else { Candidate::Arima(spec) };

    let (forecasts, failures) = timed("forecast", || match chosen {
        Candidate::Naive => {
            let f = fleet
                .iter()
                .map(|series| Ok((series.od_pair, naive_forecast(&series.values, steps)?)))
                .collect::<Result<BTreeMap<_, _>>>()?;
            Ok((f, Vec::new()))
        }
        Candidate::Arima(spec) => {
            let fit = fit_fleet(fleet, spec)?;
            let failures: Vec<_> = fit.failures.keys().copied().collect();
            Ok((fit.forecast(fleet, steps)?, failures))
        }
    })?;
    if forecasts.values().flatten().any(|v| !v.is_finite()) {
        return Err(NumericalError("forecast produced non-finite values".into()).into());
    }

    csvio::write_forecast(&out.join("forecast.csv"), &forecasts, first_interval)?;
    write_selection(&out.join("selection_report.csv"), &selection)?;

    report.section("forecast");
    report.kv("series", fleet.len());
    report.kv("validation_intervals", validation);
    report.line("spec nrmse r_squared fallbacks");
    for row in &selection.rows {
        report.line(&format!(
            "{} {} {} {}",
            row.candidate,
            csvio::fmt_f64(row.nrmse),
            row.r_squared.map_or("undefined".to_string(), csvio::fmt_f64),
            row.fallbacks.len()
        ));
    }
    report.kv("winner", selection.winner);
    report.kv("forecast_model", chosen);
    report.kv("steps", steps);
    report.kv("first_interval", first_interval);
    let pairs: Vec<String> = failures.iter().map(|(o, d)| format!("{o}->{d}")).collect();
    report.kv("naive_fallbacks", if pairs.is_empty() { "none".to_string() } else { pairs.join(" ") });
    report.end_section();
    Ok(forecasts)
}

pub fn forecast(s: &Settings) -> Result<()> {
    let plan = forecast_plan(s)?;
    let history_path = required(&s.demand, "demand")?;
    let grid = time_grid(s, history_path)?;
    let history = csvio::read_demand(history_path, grid)?;
    let out = output_dir(s)?;
    let mut report = Report::new("forecast", s);
    forecast_stage(&plan, &fleet_from_demand(&history), grid.num_intervals + 1, &out, &mut report)?;
    report.write(&out)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    scenario: Vec<ScenarioEntry>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioEntry {
    name: Option<String>,
    link_ids: Vec<i64>,
    start_time: String,
    duration_s: f64,
    capacity_factor: Option<f64>,
    lanes_blocked: Option<u32>,
}

/// Capacity factor from an explicit value or from blocked lanes.
fn scenario(
    network: &Network,
    name: String,
    links: Vec<LinkId>,
    start: f64,
    duration: f64,
    factor: Option<f64>,
    lanes_blocked: Option<u32>,
) -> Result<IncidentScenario> {
    match (factor, lanes_blocked) {
        (Some(f), lanes) => Ok(IncidentScenario {
            name,
            link_ids: links,
            start_time: start,
            duration,
            capacity_factor: f,
            lanes_blocked: lanes.unwrap_or(0),
        }),
        (None, Some(blocked)) => {
            let lanes: Vec<u32> = links
                .iter()
                .map(|&id| Ok(network.link(network.link_idx(id)?).lanes))
                .collect::<Result<_>>()?;
            if lanes.windows(2).any(|w| w[0] != w[1]) {
                return Err(usage(format!(
                    "scenario {name}: `lanes_blocked` needs links with equal lane counts"
                )));
            }
            let total = lanes.first().copied().unwrap_or(0);
            if blocked > total {
                return Err(usage(format!("scenario {name}: {blocked} lanes blocked on a {total}-lane link")));
            }
            Ok(IncidentScenario::from_lanes(name, links, start, duration, blocked, total))
        }
        (None, None) => Err(usage(format!(
            "scenario {name}: set `capacity_factor` or `lanes_blocked`"
        ))),
    }
}

fn scenarios(s: &Settings, network: &Network, grid: &TimeGrid) -> Result<Vec<IncidentScenario>> {
    if let Some(path) = &s.scenario_file {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("{}: file not found", path.display()))?;
        let file: ScenarioFile = toml::from_str(&text)
            .map_err(|e| usage(format!("scenario file {}: {e}", path.display())))?;
        return file
            .scenario
            .into_iter()
            .enumerate()
            .map(|(k, e)| {
                let name = e.name.unwrap_or_else(|| format!("scenario_{}", k + 1));
                let start = clock(&e.start_time, "start_time")?;
                let links = e.link_ids.into_iter().map(LinkId).collect();
                scenario(network, name, links, start, e.duration_s, e.capacity_factor, e.lanes_blocked)
            })
            .collect();
    }
    let links: Vec<LinkId> = parse_list::<i64>(required(&s.link_ids, "link_ids")?, ',', "link_ids")?
        .into_iter()
        .map(LinkId)
        .collect();
    let start = match &s.incident_start {
        Some(t) => clock(t, "incident_start")?,
        None => grid.start,
    };
    let durations = match (&s.durations_s, s.duration_s) {
        (Some(list), _) => parse_list::<f64>(list, ',', "durations_s")?,
        (None, Some(d)) => vec![d],
        (None, None) => return Err(usage("set `duration_s`, `durations_s` or `scenario_file`")),
    };
    if durations.is_empty() {
        return Err(usage("`durations_s` is empty"));
    }
    durations
        .into_iter()
        .map(|d| {
            scenario(
                network,
                format!("incident_{}s", csvio::fmt_f64(d)),
                links.clone(),
                start,
                d,
                s.capacity_factor,
                s.lanes_blocked,
            )
        })
        .collect()
}

fn incident_stage(
    s: &Settings,
    network: &Network,
    demand: &OdMatrixSeries,
    out: &Path,
    report: &mut Report,
) -> Result<()> {
    let grid = demand.grid();
    let list = scenarios(s, network, &grid)?;
    let watched = match s.watched_link {
        Some(id) => LinkId(id),
        None => *list
            .first()
            .and_then(|sc| sc.link_ids.first())
            .ok_or_else(|| usage("missing required setting `watched_link`"))?,
    };
    let config = IncidentConfig {
        assignment: assign_config(s)?,
        gridlock_share: *required(&s.gridlock_share, "gridlock_share")?,
    };
    let outcomes = timed("incident analysis", || {
        Ok(run_incident_analysis(network, demand, &list, watched, &config)?)
    })?;
    write_incident_report(&out.join("incident_report.csv"), &outcomes)?;

    report.section("incident");
    report.kv("watched_link", watched);
    report.kv("horizon_start", tripflow_core::network::format_clock(grid.start));
    report.kv("intervals", grid.num_intervals);
    incident_table(report, &outcomes);
    report.end_section();
    Ok(())
}

pub fn incident(s: &Settings) -> Result<()> {
    let network = load_net(s)?;
    let demand_path = required(&s.demand, "demand")?;
    let grid = time_grid(s, demand_path)?;
    let demand = csvio::read_demand(demand_path, grid)?;
    let out = output_dir(s)?;
    let mut report = Report::new("incident", s);
    incident_stage(s, &network, &demand, &out, &mut report)?;
    report.write(&out)
}

pub fn synth(s: &Settings) -> Result<()> {
    let noise = *required(&s.noise, "noise")?;
    if !(0.0..1.0).contains(&noise) {
        return Err(usage("`noise` must lie in [0, 1)"));
    }
    let fleet = Ar1Fleet {
        series: *required(&s.od_pairs, "od_pairs")?,
        length: *required(&s.fleet_length, "fleet_length")?,
        ..Ar1Fleet::default()
    };
    if fleet.series == 0 || fleet.length == 0 {
        return Err(usage("`od_pairs` and `fleet_length` must be at least 1"));
    }
    let config = SynthConfig {
        seed: *required(&s.seed, "seed")?,
        noise,
        fleet,
    };
    let out = output_dir(s)?;
    timed("synth", || Ok(write_fixtures(&out, &config)?))?;
    let mut report = Report::new("synth", s);
    report.section("synth");
    report.kv("seed", config.seed);
    report.num("noise", config.noise);
    report.kv("fleet_series", fleet.series);
    report.kv("fleet_length", fleet.length);
    report.end_section();
    report.write(&out)
}

/// Estimation on the count period, a forecast of the next `steps`
/// intervals, then the incident scenarios on the forecast demand.
pub fn pipeline(s: &Settings) -> Result<()> {
    let plan = forecast_plan(s)?;
    let out = output_dir(s)?;
    let mut report = Report::new("pipeline", s);
    let Estimated { network, result } = estimate_stage(s, &out, &mut report)?;

    let estimated = &result.estimated_demand;
    let grid = estimated.grid();
    let fleet = fleet_from_demand(estimated);
    let forecasts = forecast_stage(&plan, &fleet, grid.num_intervals + 1, &out, &mut report)?;

    let pairs: Vec<(ZoneId, ZoneId)> = forecasts.keys().copied().collect();
    let values: Vec<f64> = forecasts.values().flatten().copied().collect();
    let future = OdMatrixSeries::from_values(grid.following(plan.steps), pairs, values)?;
    incident_stage(s, &network, &future, &out, &mut report)?;
    report.write(&out)
}
