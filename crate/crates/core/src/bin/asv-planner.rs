use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use asv_planner::pipeline::{emit_outputs, run_pipeline, EmitOptions, Mode};
use asv_planner::{PlanError, Scenario, Status};

/// Plan a vessel trajectory for a scenario file.
#[derive(Debug, Parser)]
#[command(name = "asv-planner", version)]
struct Args {
    /// Scenario TOML file.
    #[arg(long)]
    scenario: PathBuf,
    /// warm, cold or guess.
    #[arg(long, default_value = "warm")]
    mode: String,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Override the number of shooting intervals.
    #[arg(long)]
    n_ocp: Option<usize>,
    /// Write the per-iteration solver trace.
    #[arg(long)]
    trace: bool,
    /// Write grid, A* path, waypoints and warm-start CSVs.
    #[arg(long)]
    dump_grid: bool,
}

fn run(args: &Args) -> Result<Option<Status>, PlanError> {
    let mode: Mode = args.mode.parse()?;
    let mut scenario = Scenario::load(&args.scenario)?;
    if let Some(n) = args.n_ocp {
        scenario.n_ocp = n;
        scenario.validate()?;
    }
    let out = run_pipeline(&scenario, mode, args.trace)?;
    emit_outputs(
        &scenario,
        &out,
        &args.out,
        EmitOptions {
            trace: args.trace,
            dump_grid: args.dump_grid,
        },
    )?;
    let m = &out.metrics;
    eprintln!(
        "{mode}: J = {:.6e} (energy {:.6e} J, turn {:.6e}), iterations {}, {:.2} s",
        m.scaled_total_cost,
        m.energy_cost,
        m.turn_cost,
        m.iterations.map_or("-".to_string(), |i| i.to_string()),
        m.timings.total
    );
    Ok(m.status)
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 4 } else { 0 });
        }
    };
    match run(&args) {
        Ok(None) | Ok(Some(Status::Converged)) => ExitCode::SUCCESS,
        Ok(Some(status)) => {
            eprintln!("solver did not converge: {status:?}");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
