mod common;

use std::path::{Path, PathBuf};

use tempfile::TempDir;

use tripflow_core::csvio::{read_demand_table, read_forecast, read_trace};
use tripflow_core::network::ZoneId;

use common::{run, run_in, snapshot};

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Fresh fixture set from the default seed.
fn fixtures() -> (TempDir, PathBuf) {
    let tmp = tempfile::tempdir().unwrap();
    let fx = tmp.path().join("fx");
    let out = run(&["synth", "--output-dir", s(&fx), "--od-pairs", "6", "--fleet-length", "40"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    (tmp, fx)
}

fn code(out: &std::process::Output) -> i32 {
    out.status.code().unwrap()
}

fn stderr(out: &std::process::Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn synth_is_byte_identical_across_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let mut snaps = Vec::new();
    for _ in 0..2 {
        let _ = std::fs::remove_dir_all(tmp.path().join("fx"));
        let out = run_in(tmp.path(), &["synth", "--output-dir", "fx"]);
        assert!(out.status.success());
        snaps.push(snapshot(&tmp.path().join("fx")));
    }
    assert_eq!(snaps[0], snaps[1]);
    for file in ["grid/links.csv", "truth_demand.csv", "prior_demand.csv", "counts.csv", "ar1_fleet.csv", "bottleneck/demand.csv"] {
        assert!(snaps[0].contains_key(Path::new(file)), "{file} missing");
    }
}

#[test]
fn synth_prior_noise_stays_within_bounds() {
    let tmp = tempfile::tempdir().unwrap();
    let fx = tmp.path().join("fx");
    assert!(run(&["synth", "--output-dir", s(&fx), "--noise", "0.3", "--seed", "7"]).status.success());
    let truth = read_demand_table(&fx.join("truth_demand.csv")).unwrap();
    let prior = read_demand_table(&fx.join("prior_demand.csv")).unwrap();
    assert_eq!(truth.len(), prior.len());
    for (pair, series) in &truth {
        for (&(t, x), &(t2, p)) in series.iter().zip(&prior[pair]) {
            assert_eq!(t, t2);
            assert!(p >= 0.7 * x - 1e-9 && p <= 1.3 * x + 1e-9, "{pair:?} {t}: {p} vs {x}");
        }
    }
}

#[test]
fn synth_fleet_scales_to_thousands_of_pairs() {
    let tmp = tempfile::tempdir().unwrap();
    let fx = tmp.path().join("fx");
    let out = run(&["synth", "--output-dir", s(&fx), "--od-pairs", "3000", "--fleet-length", "24"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let fleet = read_demand_table(&fx.join("ar1_fleet.csv")).unwrap();
    assert_eq!(fleet.len(), 3000);
    assert!(fleet.values().all(|s| s.len() == 24));
}

#[test]
fn simulate_writes_flows_and_optional_proportions() {
    let (tmp, fx) = fixtures();
    let out_dir = tmp.path().join("sim");
    let (grid, demand) = (fx.join("grid"), fx.join("truth_demand.csv"));
    let base = ["simulate", "--network-dir", s(&grid), "--demand", s(&demand), "--output-dir", s(&out_dir)];
    let out = run(&base);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(out_dir.join("flows.csv").exists());
    assert!(!out_dir.join("proportions.csv").exists());

    let mut with_dump = base.to_vec();
    with_dump.push("--dump-proportions");
    assert_eq!(code(&run(&with_dump)), 0);
    let text = std::fs::read_to_string(out_dir.join("proportions.csv")).unwrap();
    assert!(text.starts_with("link_id,od_origin,od_dest,interval_h,interval_t,proportion\n"));
    assert!(text.lines().count() > 1);
}

#[test]
fn missing_demand_file_is_a_data_error() {
    let (tmp, fx) = fixtures();
    let out = run(&[
        "simulate",
        "--network-dir",
        s(&fx.join("grid")),
        "--demand",
        s(&tmp.path().join("absent.csv")),
        "--num-intervals",
        "16",
    ]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("file not found"), "{}", stderr(&out));
}

#[test]
fn estimate_on_self_generated_counts_stops_after_one_row() {
    let (tmp, fx) = fixtures();
    let sim = tmp.path().join("sim");
    let prior = fx.join("prior_demand.csv");
    let grid = fx.join("grid");
    assert_eq!(
        code(&run(&["simulate", "--network-dir", s(&grid), "--demand", s(&prior), "--output-dir", s(&sim)])),
        0
    );
    let flows = std::fs::read_to_string(sim.join("flows.csv")).unwrap();
    let counts = tmp.path().join("self_counts.csv");
    std::fs::write(&counts, flows.replacen("link_id,interval,flow_veh", "link_id,interval,count_veh", 1)).unwrap();

    let est = tmp.path().join("est");
    let out = run(&[
        "estimate", "--network-dir", s(&grid), "--demand", s(&prior), "--counts", s(&counts), "--output-dir", s(&est),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let trace = read_trace(&est.join("convergence_trace.csv")).unwrap();
    assert_eq!(trace.len(), 1);
    assert_eq!(trace[0].2, 1.0);
}

#[test]
fn estimate_recovers_the_synthetic_fixture() {
    let (tmp, fx) = fixtures();
    let est = tmp.path().join("est");
    let out = run(&[
        "estimate",
        "--network-dir",
        s(&fx.join("grid")),
        "--demand",
        s(&fx.join("prior_demand.csv")),
        "--counts",
        s(&fx.join("counts.csv")),
        "--output-dir",
        s(&est),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let trace = read_trace(&est.join("convergence_trace.csv")).unwrap();
    assert!(trace.iter().any(|r| r.2 >= 0.9));
    let scatter = std::fs::read_to_string(est.join("scatter.csv")).unwrap();
    assert!(scatter.starts_with("link_id,interval,observed,simulated_before,simulated_after\n"));
    // 32 links x 16 intervals of counts.
    assert_eq!(scatter.lines().count(), 1 + 32 * 16);
    let estimated = read_demand_table(&est.join("estimated_demand.csv")).unwrap();
    assert_eq!(estimated.len(), 12);
    let report = std::fs::read_to_string(est.join("run_report.txt")).unwrap();
    assert!(report.contains("[config]") && report.contains("omega = 0.9"));
}

#[test]
fn omega_outside_unit_interval_is_a_config_error() {
    let (_tmp, fx) = fixtures();
    let out = run(&[
        "estimate",
        "--network-dir",
        s(&fx.join("grid")),
        "--demand",
        s(&fx.join("prior_demand.csv")),
        "--counts",
        s(&fx.join("counts.csv")),
        "--omega",
        "1.5",
    ]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("omega"));
}

#[test]
fn flags_override_the_config_file() {
    let (tmp, fx) = fixtures();
    let cfg = tmp.path().join("run.toml");
    std::fs::write(
        &cfg,
        "network_dir = \"fx/grid\"\ndemand = \"fx/prior_demand.csv\"\ncounts = \"fx/counts.csv\"\n\
         output_dir = \"est\"\nomega = 1.5\n",
    )
    .unwrap();
    assert_eq!(code(&run(&["estimate", "--config", s(&cfg)])), 1);
    let out = run(&["estimate", "--config", s(&cfg), "--omega", "1"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let trace = read_trace(&tmp.path().join("est/convergence_trace.csv")).unwrap();
    assert_eq!(trace.len(), 1);
    let _ = fx;
}

#[test]
fn unknown_config_key_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.toml");
    std::fs::write(&cfg, "omegaa = 0.5\n").unwrap();
    let out = run(&["estimate", "--config", s(&cfg)]);
    assert_eq!(code(&out), 1);
    assert_eq!(code(&run(&["no-such-command"])), 1);
    assert_eq!(code(&run(&["--help"])), 0);
}

#[test]
fn forecast_spec_gives_steps_per_pair() {
    let (tmp, fx) = fixtures();
    let out_dir = tmp.path().join("fc");
    let out = run(&[
        "forecast", "--demand", s(&fx.join("ar1_fleet.csv")), "--start-time", "00:00", "--spec", "1,0,0", "--steps", "2",
        "--output-dir", s(&out_dir),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let rows = read_forecast(&out_dir.join("forecast.csv")).unwrap();
    assert_eq!(rows.len(), 6 * 2);
    assert_eq!(rows[0].0, (ZoneId(1), ZoneId(2)));
    assert_eq!((rows[0].1, rows[1].1), (41, 42));
    assert!(rows.iter().all(|r| r.2 >= 0.0));
    let report = std::fs::read_to_string(out_dir.join("selection_report.csv")).unwrap();
    assert_eq!(report.lines().count(), 3);
}

#[test]
fn forecast_select_reports_naive_and_four_candidates() {
    let (tmp, fx) = fixtures();
    let out_dir = tmp.path().join("fc");
    let out = run(&["forecast", "--demand", s(&fx.join("ar1_fleet.csv")), "--select", "--output-dir", s(&out_dir)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let report = std::fs::read_to_string(out_dir.join("selection_report.csv")).unwrap();
    let specs: Vec<&str> = report.lines().skip(1).map(|l| l.split(",\"").next().unwrap().split(',').next().unwrap()).collect();
    assert_eq!(specs.len(), 5);
    assert_eq!(specs[0], "naive");
    for spec in ["ARIMA(1,0,0)", "ARIMA(1,1,0)", "ARIMA(0,0,1)", "ARIMA(0,1,1)"] {
        assert!(report.contains(spec), "{spec} missing from\n{report}");
    }
}

#[test]
fn forecast_on_empty_demand_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let empty = tmp.path().join("empty.csv");
    std::fs::write(&empty, "origin_zone,dest_zone,interval,trips\n").unwrap();
    let out = run(&["forecast", "--demand", s(&empty), "--output-dir", s(&tmp.path().join("o"))]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
    let bad = run(&["forecast", "--demand", s(&empty), "--spec", "1,x,0", "--num-intervals", "4"]);
    assert_eq!(code(&bad), 1);
}

fn incident_args<'a>(fx: &'a Path, out: &'a Path) -> Vec<String> {
    let b = fx.join("bottleneck");
    [
        "incident",
        "--network-dir",
        s(&b),
        "--demand",
        s(&b.join("demand.csv")),
        "--start-time",
        "09:45",
        "--link-ids",
        "4",
        "--incident-start",
        "09:57",
        "--output-dir",
        s(out),
    ]
    .iter()
    .map(|a| a.to_string())
    .collect()
}

fn run_owned(args: &[String]) -> std::process::Output {
    run(&args.iter().map(String::as_str).collect::<Vec<_>>())
}

#[test]
fn incident_sweep_writes_baseline_and_four_rows() {
    let (tmp, fx) = fixtures();
    let out_dir = tmp.path().join("inc");
    let mut args = incident_args(&fx, &out_dir);
    args.extend(["--durations-s", "180,300,420,600", "--lanes-blocked", "2"].map(String::from));
    let out = run_owned(&args);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = std::fs::read_to_string(out_dir.join("incident_report.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "scenario,duration_s,capacity_factor,avg_delay_s,delay_ratio_vs_baseline,min_throughput_vph");
    assert_eq!(lines.len(), 6);
    assert!(lines[1].starts_with("baseline,0,1,"));
    assert!(lines[2].starts_with("incident_180s,180,0.3333333333333333,"));
}

#[test]
fn unit_capacity_factor_has_unit_delay_ratio() {
    let (tmp, fx) = fixtures();
    let out_dir = tmp.path().join("inc");
    let mut args = incident_args(&fx, &out_dir);
    args.extend(["--duration-s", "600", "--capacity-factor", "1"].map(String::from));
    assert_eq!(code(&run_owned(&args)), 0);
    let text = std::fs::read_to_string(out_dir.join("incident_report.csv")).unwrap();
    let row: Vec<&str> = text.lines().nth(2).unwrap().split(',').collect();
    assert_eq!(row[4], "1");
}

#[test]
fn unknown_watched_link_fails() {
    let (tmp, fx) = fixtures();
    let mut args = incident_args(&fx, &tmp.path().join("inc"));
    args.extend(["--duration-s", "300", "--capacity-factor", "0.5", "--watched-link", "99"].map(String::from));
    let out = run_owned(&args);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("unknown link 99"));
}

#[test]
fn scenario_file_is_accepted() {
    let (tmp, fx) = fixtures();
    let file = tmp.path().join("scenarios.toml");
    std::fs::write(
        &file,
        "[[scenario]]\nname = \"crash\"\nlink_ids = [4]\nstart_time = \"09:57\"\nduration_s = 420\nlanes_blocked = 1\n\n\
         [[scenario]]\nlink_ids = [3, 4]\nstart_time = \"10:05\"\nduration_s = 300\ncapacity_factor = 0.5\n",
    )
    .unwrap();
    let b = fx.join("bottleneck");
    let out_dir = tmp.path().join("inc");
    let out = run(&[
        "incident",
        "--network-dir",
        s(&b),
        "--demand",
        s(&b.join("demand.csv")),
        "--start-time",
        "09:45",
        "--scenario-file",
        s(&file),
        "--watched-link",
        "4",
        "--output-dir",
        s(&out_dir),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = std::fs::read_to_string(out_dir.join("incident_report.csv")).unwrap();
    let names: Vec<&str> = text.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(names, ["baseline", "crash", "scenario_2"]);
    assert!(text.contains("crash,420,0.6666666666666666,"));
}

#[test]
fn pipeline_writes_every_stage() {
    let (tmp, fx) = fixtures();
    let out_dir = tmp.path().join("run");
    let out = run(&[
        "pipeline",
        "--network-dir",
        s(&fx.join("grid")),
        "--demand",
        s(&fx.join("prior_demand.csv")),
        "--counts",
        s(&fx.join("counts.csv")),
        "--link-ids",
        "1",
        "--durations-s",
        "180,600",
        "--capacity-factor",
        "0.25",
        "--steps",
        "2",
        "--output-dir",
        s(&out_dir),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    for file in [
        "estimated_demand.csv",
        "convergence_trace.csv",
        "scatter.csv",
        "forecast.csv",
        "selection_report.csv",
        "incident_report.csv",
        "run_report.txt",
    ] {
        assert!(out_dir.join(file).exists(), "{file} missing");
    }
    let forecast = read_forecast(&out_dir.join("forecast.csv")).unwrap();
    assert_eq!(forecast.len(), 12 * 2);
    assert!(forecast.iter().all(|r| r.1 == 17 || r.1 == 18));
    let report = std::fs::read_to_string(out_dir.join("run_report.txt")).unwrap();
    for section in ["[estimation]", "[forecast]", "[incident]", "horizon_start = 10:00"] {
        assert!(report.contains(section), "{section} missing");
    }
}
