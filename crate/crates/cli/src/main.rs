use std::path::PathBuf;
use std::process::ExitCode;

use cav_corridor::SimMode;
use cav_corridor_cli::{
    check_oracle_rows, load, run_case, run_compare, run_oracle_check, run_plot, run_simulate, CliError, CliResult,
    Options,
};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(
    name = "cav-corridor",
    version,
    about = "Energy-optimal corridor control: solve, simulate, compare"
)]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Subcommand)]
enum Verb {
    /// Plan every scheduled vehicle of a scenario; writes trajectory.csv, report.json, plots.svg.
    Solve(Common),
    /// Run the corridor simulation; writes trajectory.csv, events.jsonl, report.json.
    Simulate(Common),
    /// Run baseline and optimal modes with one seed; writes both runs and comparison.json.
    Compare(Common),
    /// Compare analytical costs with the direct transcription.
    OracleCheck(Common),
    /// Write the u(t), v(t) and margin panels of `solve` as plots.svg.
    Plot(Common),
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Optimal,
    Baseline,
}

#[derive(Args)]
struct Common {
    /// Scenario file (TOML).
    #[arg(long)]
    scenario: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long)]
    seed: Option<u64>,
    /// Time step in seconds.
    #[arg(long)]
    dt: Option<f64>,
}

impl Common {
    fn options(&self) -> Options {
        Options {
            mode: self.mode.map(|m| match m {
                ModeArg::Optimal => SimMode::Optimal,
                ModeArg::Baseline => SimMode::Baseline,
            }),
            seed: self.seed,
            dt: self.dt,
        }
    }
}

fn execute(verb: Verb) -> CliResult<()> {
    match verb {
        Verb::Solve(c) => {
            for path in run_case(&c.scenario, &c.out, &c.options())? {
                println!("wrote {}", path.display());
            }
        }
        Verb::Plot(c) => {
            for path in run_plot(&c.scenario, &c.out, &c.options())? {
                println!("wrote {}", path.display());
            }
        }
        Verb::Simulate(c) => {
            let report = run_simulate(&c.scenario, &c.out, &c.options())?;
            let a = &report.aggregates;
            println!(
                "{} ({}): {} vehicles, {} completed, fuel {:.1} mL, mean travel time {:.2} s, {} violations",
                report.scenario,
                report.mode,
                a.vehicles,
                a.completed,
                a.total_fuel,
                a.mean_travel_time,
                a.violation_count
            );
        }
        Verb::Compare(c) => {
            let cmp = run_compare(&c.scenario, &c.out, &c.options())?;
            println!(
                "fuel {:.1} -> {:.1} mL ({:.2}% saved), mean travel time {:.2} -> {:.2} s, violations {} -> {}",
                cmp.total_fuel_a,
                cmp.total_fuel_b,
                cmp.fuel_savings_pct,
                cmp.mean_travel_time_a,
                cmp.mean_travel_time_b,
                cmp.violations_a,
                cmp.violations_b
            );
        }
        Verb::OracleCheck(c) => {
            let tolerance = load(&c.scenario)?.tolerances.oracle_rel;
            let rows = run_oracle_check(&c.scenario)?;
            print!("{}", check_oracle_rows(&rows, tolerance)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli.verb) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_byte(&e))
        }
    }
}

fn exit_byte(e: &CliError) -> u8 {
    u8::try_from(e.exit_code()).unwrap_or(1)
}
