//! Verbs behind the `cav-corridor` binary.
//!
//! Every verb renders all of its outputs in memory first and only then
//! creates the output directory and writes the files, so a failing run leaves
//! nothing behind.
//!
//! # Output schemas (version 1)
//!
//! * `trajectory.csv`: `vehicle_id,t,p,v,u,margin` in s, m, m/s, m/s² and m.
//!   `margin` is empty when no leader is in range.
//! * `report.json`: a case report from `solve`, or a run report from `simulate`.
//!   Both carry a `schema_version` field.
//! * `events.jsonl`: one simulation event per line, tagged by `event`.
//! * `comparison.json`: baseline against optimal, from `compare`.
//! * `plots.svg`: stacked u(t), v(t) and margin(t) panels.

pub mod svg;

use std::fs;
use std::path::{Path, PathBuf};

use cav_corridor::constraint::margin_at;
use cav_corridor::metrics::{sample_trajectory, Comparison, REPORT_SCHEMA_VERSION};
use cav_corridor::oracle::solve_transcribed;
use cav_corridor::sim::{self, SimConfig, StepSample};
use cav_corridor::{
    compare_runs, solve_route, total_fuel, Error as CoreError, LeaderMotion, LeaderProfile, RoutePlanProblem,
    RunReport, ScenarioSpec, SimMode, Trajectory,
};
use serde::Serialize;

use crate::svg::{Chart, Series};

pub const EXIT_PARSE: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;
pub const EXIT_TOLERANCE: i32 = 4;
/// Anything else, such as an unwritable output directory.
pub const EXIT_OTHER: i32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Parse(String),
    #[error("{0}")]
    Infeasible(String),
    #[error("{0}")]
    Tolerance(String),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse(_) => EXIT_PARSE,
            CliError::Infeasible(_) => EXIT_INFEASIBLE,
            CliError::Tolerance(_) => EXIT_TOLERANCE,
            CliError::Other(_) => EXIT_OTHER,
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::Parse(_) | CoreError::InvalidScenario(_) | CoreError::Contract(_) => {
                CliError::Parse(e.to_string())
            }
            CoreError::Infeasible { .. } | CoreError::NotConverged(_) | CoreError::Singular(_) => {
                CliError::Infeasible(e.to_string())
            }
            other => CliError::Other(other.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Overrides given on the command line.
#[derive(Debug, Clone, Copy, Default)]
pub struct Options {
    pub mode: Option<SimMode>,
    pub seed: Option<u64>,
    pub dt: Option<f64>,
}

/// A file to be written, relative to the output directory.
#[derive(Debug, Clone, PartialEq)]
pub struct Output {
    pub name: String,
    pub contents: String,
}

pub fn load(path: &Path) -> CliResult<ScenarioSpec> {
    Ok(ScenarioSpec::load(path)?)
}

/// Creates `dir` and writes every output into it.
pub fn write_outputs(dir: &Path, outputs: &[Output]) -> CliResult<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| CliError::Other(format!("{}: {e}", dir.display())))?;
    outputs
        .iter()
        .map(|o| {
            let path = dir.join(&o.name);
            fs::write(&path, &o.contents).map_err(|e| CliError::Other(format!("{}: {e}", path.display())))?;
            Ok(path)
        })
        .collect()
}

fn to_json<T: Serialize>(value: &T) -> CliResult<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| CliError::Other(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

/// One row of `trajectory.csv`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrajectoryRow {
    pub vehicle_id: u32,
    pub t: f64,
    pub p: f64,
    pub v: f64,
    pub u: f64,
    pub margin: Option<f64>,
}

impl From<&StepSample> for TrajectoryRow {
    fn from(s: &StepSample) -> Self {
        Self {
            vehicle_id: s.vehicle,
            t: s.t,
            p: s.p,
            v: s.v,
            u: s.u,
            margin: s.margin,
        }
    }
}

pub fn trajectory_csv(rows: &[TrajectoryRow]) -> CliResult<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    if rows.is_empty() {
        w.write_record(["vehicle_id", "t", "p", "v", "u", "margin"])
            .map_err(|e| CliError::Other(e.to_string()))?;
    }
    for r in rows {
        w.serialize(r).map_err(|e| CliError::Other(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Other(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| CliError::Other(e.to_string()))
}

/// A vehicle planned on its own by `solve`.
#[derive(Debug, Clone, Serialize)]
pub struct CaseVehicle {
    pub id: u32,
    pub cost: f64,
    pub entry_time: f64,
    pub terminal_time: f64,
    pub final_position: f64,
    pub final_control: f64,
    /// Largest pin error over waypoints and the terminal position, m.
    pub pin_error: f64,
    pub constrained_windows: Vec<(f64, f64)>,
    pub min_margin: Option<f64>,
    pub fuel: f64,
    pub bound_violations: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct CaseReport {
    pub schema_version: u32,
    pub scenario: String,
    pub vehicles: Vec<CaseVehicle>,
}

/// A solved scenario vehicle, ready to be sampled or reported.
pub struct SolvedVehicle {
    pub id: u32,
    pub trajectory: Trajectory,
    pub leader: Option<LeaderProfile>,
    pub summary: CaseVehicle,
}

/// Plans every vehicle that carries its own schedule.
pub fn solve_scenario(spec: &ScenarioSpec) -> CliResult<Vec<SolvedVehicle>> {
    let corridor = spec.corridor();
    let bounds = spec.vehicle_params();
    let mut out = Vec::new();
    for v in spec.vehicles.iter().filter(|v| v.terminal_time_s.is_some()) {
        let schedule = v.schedule(&corridor)?;
        let leader = v.leader.as_ref().map(|l| l.profile());
        let safety = spec.safety_for(v);
        let mut problem = RoutePlanProblem::new(schedule.clone()).with_vehicle(bounds);
        if let Some(l) = &leader {
            problem = problem.with_leader(l as &dyn LeaderMotion, safety);
        }
        let trajectory = solve_route(&problem).map_err(|e| match e {
            CoreError::Infeasible { time, reason } => {
                CliError::Infeasible(format!("vehicle {}: infeasible at t = {time:.4} s: {reason}", v.id))
            }
            other => CliError::from(other),
        })?;
        let end = trajectory.at(schedule.terminal_time);
        let pin_error = schedule
            .knots()
            .map(|(t, p)| (trajectory.at(t).p - p).abs())
            .fold(0.0, f64::max);
        let min_margin = leader.as_ref().map(|l| {
            let to = schedule.terminal_time.min(l.exit_time);
            cav_corridor::constraint::min_margin(&trajectory, l, &safety, schedule.entry_time, to).1
        });
        let samples = sample_trajectory(&trajectory, spec.simulation.sample_interval_s);
        let fuel = total_fuel(&samples, spec.simulation.sample_interval_s, &spec.fuel_coefficients())?;
        let summary = CaseVehicle {
            id: v.id,
            cost: trajectory.cost,
            entry_time: schedule.entry_time,
            terminal_time: schedule.terminal_time,
            final_position: end.p,
            final_control: end.u,
            pin_error,
            constrained_windows: trajectory
                .constrained_segments()
                .map(|c| (c.t_start(), c.t_end()))
                .collect(),
            min_margin,
            fuel,
            bound_violations: trajectory.bound_violations(&bounds, 0.01).len(),
        };
        out.push(SolvedVehicle {
            id: v.id,
            trajectory,
            leader,
            summary,
        });
    }
    if out.is_empty() {
        return Err(CliError::Parse(format!(
            "scenario {:?} has no vehicle with terminal_time_s to solve",
            spec.name
        )));
    }
    Ok(out)
}

/// Rows at `t0, t0 + dt, …` plus one at the terminal time.
pub fn sample_rows(spec: &ScenarioSpec, solved: &[SolvedVehicle], dt: f64) -> Vec<TrajectoryRow> {
    let mut rows = Vec::new();
    for s in solved {
        let (t0, tf) = (s.trajectory.start_time(), s.trajectory.end_time());
        let safety = spec
            .vehicles
            .iter()
            .find(|v| v.id == s.id)
            .map_or(spec.safety_params(), |v| spec.safety_for(v));
        let n = ((tf - t0) / dt - 1e-9).ceil().max(0.0) as usize;
        for t in (0..n).map(|k| t0 + k as f64 * dt).chain(std::iter::once(tf)) {
            let pt = s.trajectory.at(t);
            let margin = s
                .leader
                .as_ref()
                .filter(|l| t <= l.exit_time)
                .map(|l| margin_at(&s.trajectory, l, &safety, t));
            rows.push(TrajectoryRow {
                vehicle_id: s.id,
                t,
                p: pt.p,
                v: pt.v,
                u: pt.u,
                margin,
            });
        }
    }
    rows
}

fn case_plots(rows: &[TrajectoryRow], solved: &[SolvedVehicle], title: &str) -> String {
    let ids: Vec<u32> = solved.iter().map(|s| s.id).collect();
    let series = |f: fn(&TrajectoryRow) -> Option<f64>| -> Vec<Series> {
        ids.iter()
            .map(|&id| Series {
                label: format!("vehicle {id}"),
                points: rows
                    .iter()
                    .filter(|r| r.vehicle_id == id)
                    .filter_map(|r| f(r).map(|y| (r.t, y)))
                    .collect(),
            })
            .filter(|s| !s.points.is_empty())
            .collect()
    };
    let shaded: Vec<(f64, f64)> = solved
        .iter()
        .flat_map(|s| s.summary.constrained_windows.iter().copied())
        .collect();
    let mut charts = vec![
        Chart {
            title: format!("{title}: control u(t)"),
            x_label: "t [s]".into(),
            y_label: "u [m/s²]".into(),
            series: series(|r| Some(r.u)),
            shaded: shaded.clone(),
            zero_line: true,
        },
        Chart {
            title: format!("{title}: speed v(t)"),
            x_label: "t [s]".into(),
            y_label: "v [m/s]".into(),
            series: series(|r| Some(r.v)),
            shaded: shaded.clone(),
            zero_line: false,
        },
    ];
    let margins = series(|r| r.margin);
    if !margins.is_empty() {
        charts.push(Chart {
            title: format!("{title}: safety margin"),
            x_label: "t [s]".into(),
            y_label: "margin [m]".into(),
            series: margins,
            shaded,
            zero_line: true,
        });
    }
    svg::render(&charts)
}

fn case_outputs(spec: &ScenarioSpec, opts: &Options, with_data: bool) -> CliResult<Vec<Output>> {
    let solved = solve_scenario(spec)?;
    let dt = opts.dt.unwrap_or(spec.simulation.dt_s);
    if !dt.is_finite() || dt <= 0.0 {
        return Err(CliError::Parse(format!("--dt {dt} is not positive")));
    }
    let rows = sample_rows(spec, &solved, dt);
    let mut out = Vec::new();
    if with_data {
        let report = CaseReport {
            schema_version: REPORT_SCHEMA_VERSION,
            scenario: spec.name.clone(),
            vehicles: solved.iter().map(|s| s.summary.clone()).collect(),
        };
        out.push(Output {
            name: "trajectory.csv".into(),
            contents: trajectory_csv(&rows)?,
        });
        out.push(Output {
            name: "report.json".into(),
            contents: to_json(&report)?,
        });
    }
    out.push(Output {
        name: "plots.svg".into(),
        contents: case_plots(&rows, &solved, &spec.name),
    });
    Ok(out)
}

/// `solve`: plans each vehicle of the scenario against its own leader.
pub fn run_case(scenario: &Path, out: &Path, opts: &Options) -> CliResult<Vec<PathBuf>> {
    let spec = load(scenario)?;
    let outputs = case_outputs(&spec, opts, true)?;
    write_outputs(out, &outputs)
}

/// `plot`: only the SVG panels of `solve`.
pub fn run_plot(scenario: &Path, out: &Path, opts: &Options) -> CliResult<Vec<PathBuf>> {
    let spec = load(scenario)?;
    let outputs = case_outputs(&spec, opts, false)?;
    write_outputs(out, &outputs)
}

fn sim_config(spec: ScenarioSpec, opts: &Options) -> SimConfig {
    let mut config = SimConfig::new(spec);
    if let Some(m) = opts.mode {
        config = config.with_mode(m);
    }
    if let Some(s) = opts.seed {
        config = config.with_seed(s);
    }
    if let Some(dt) = opts.dt {
        config = config.with_dt(dt);
    }
    config
}

fn events_jsonl(events: &[sim::Event]) -> CliResult<String> {
    let mut s = String::new();
    for e in events {
        s.push_str(&serde_json::to_string(e).map_err(|e| CliError::Other(e.to_string()))?);
        s.push('\n');
    }
    Ok(s)
}

/// Runs the simulation and renders its outputs with the given file suffix.
pub fn simulate(config: &SimConfig, suffix: &str) -> CliResult<(RunReport, Vec<Output>)> {
    let outcome = sim::run(config)?;
    let rows: Vec<TrajectoryRow> = outcome.samples.iter().map(TrajectoryRow::from).collect();
    let outputs = vec![
        Output {
            name: format!("trajectory{suffix}.csv"),
            contents: trajectory_csv(&rows)?,
        },
        Output {
            name: format!("events{suffix}.jsonl"),
            contents: events_jsonl(&outcome.events)?,
        },
        Output {
            name: format!("report{suffix}.json"),
            contents: to_json(&outcome.report)?,
        },
    ];
    Ok((outcome.report, outputs))
}

/// `simulate`: one run in the configured or requested mode.
pub fn run_simulate(scenario: &Path, out: &Path, opts: &Options) -> CliResult<RunReport> {
    let config = sim_config(load(scenario)?, opts);
    let (report, outputs) = simulate(&config, "")?;
    write_outputs(out, &outputs)?;
    Ok(report)
}

/// `compare`: baseline and optimal runs with the same seed.
pub fn run_compare(scenario: &Path, out: &Path, opts: &Options) -> CliResult<Comparison> {
    let config = sim_config(load(scenario)?, opts);
    let (baseline, mut outputs) = simulate(&config.clone().with_mode(SimMode::Baseline), "_baseline")?;
    let (optimal, more) = simulate(&config.with_mode(SimMode::Optimal), "_optimal")?;
    outputs.extend(more);
    let comparison = compare_runs(&baseline, &optimal)?;
    outputs.push(Output {
        name: "comparison.json".into(),
        contents: to_json(&comparison)?,
    });
    write_outputs(out, &outputs)?;
    Ok(comparison)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleRow {
    pub vehicle: u32,
    pub analytical: f64,
    pub oracle: f64,
    pub relative_error: f64,
    pub steps: usize,
}

/// Most vehicles `oracle-check` accepts in one scenario.
pub const ORACLE_MAX_VEHICLES: usize = 3;

/// `oracle-check`: analytical cost against the transcribed problem.
pub fn run_oracle_check(scenario: &Path) -> CliResult<Vec<OracleRow>> {
    let spec = load(scenario)?;
    let planned = spec.vehicles.iter().filter(|v| v.terminal_time_s.is_some()).count();
    if planned > ORACLE_MAX_VEHICLES {
        return Err(CliError::Parse(format!(
            "oracle-check takes at most {ORACLE_MAX_VEHICLES} vehicles, scenario has {planned}"
        )));
    }
    let solved = solve_scenario(&spec)?;
    let corridor = spec.corridor();
    let steps = spec.tolerances.oracle_steps;
    let mut rows = Vec::new();
    for s in &solved {
        let v = spec
            .vehicles
            .iter()
            .find(|v| v.id == s.id)
            .expect("solved vehicles come from the scenario");
        let mut problem = RoutePlanProblem::new(v.schedule(&corridor)?).with_vehicle(spec.vehicle_params());
        if let Some(l) = &s.leader {
            problem = problem.with_leader(l as &dyn LeaderMotion, spec.safety_for(v));
        }
        let oracle = solve_transcribed(&problem, steps)?;
        let analytical = s.trajectory.cost;
        let scale = analytical.abs().max(oracle.cost.abs());
        let relative_error = if scale > 0.0 {
            (analytical - oracle.cost).abs() / scale
        } else {
            0.0
        };
        rows.push(OracleRow {
            vehicle: s.id,
            analytical,
            oracle: oracle.cost,
            relative_error,
            steps,
        });
    }
    Ok(rows)
}

/// Formats oracle rows and fails when any error exceeds the tolerance.
pub fn check_oracle_rows(rows: &[OracleRow], tolerance: f64) -> CliResult<String> {
    let mut text = String::from("vehicle  analytical        oracle            rel_error\n");
    for r in rows {
        text.push_str(&format!(
            "{:<8} {:<17.10e} {:<17.10e} {:.3e}\n",
            r.vehicle, r.analytical, r.oracle, r.relative_error
        ));
    }
    match rows.iter().find(|r| r.relative_error > tolerance) {
        Some(r) => Err(CliError::Tolerance(format!(
            "{text}vehicle {}: relative error {:.3e} exceeds {tolerance:.1e}",
            r.vehicle, r.relative_error
        ))),
        None => Ok(text),
    }
}
