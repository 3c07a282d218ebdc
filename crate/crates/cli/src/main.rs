use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pmpc::export::{self, solve_stats};
use pmpc::scenario::{bundled, load_scenario};
use pmpc::sim::{plan_scenario, run_scenario_with, RunOptions};
use pmpc::{Error, TrackScenario};

/// Point-mass planning and pairwise MPC for two quadrotors.
#[derive(Parser)]
#[command(name = "pmpc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run only the point-mass velocity search and export the references.
    Plan {
        #[command(flatten)]
        input: Input,
        /// Output directory for plan.csv and plan.json.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Simulate the closed loop and export the trajectory and summary.
    Run {
        #[command(flatten)]
        input: Input,
        /// Output directory for trajectory.csv and summary.json.
        #[arg(short, long)]
        out: Option<PathBuf>,
        /// Also record and report per-cycle solve times.
        #[arg(long)]
        benchmark: bool,
        /// Iterate the solver to convergence every cycle instead of a few real-time iterations.
        #[arg(long)]
        offline_refine: bool,
    },
    /// Simulate the closed loop and report the solve-time distribution.
    Benchmark {
        #[command(flatten)]
        input: Input,
        #[arg(short, long)]
        out: Option<PathBuf>,
        #[arg(long)]
        offline_refine: bool,
    },
}

#[derive(Args)]
struct Input {
    /// Scenario file, or the name of a bundled scenario
    /// (hover10m, position_switch, table2_track, six_gate_compact).
    scenario: String,
}

impl Input {
    fn load(&self) -> pmpc::Result<TrackScenario> {
        let path = Path::new(&self.scenario);
        if path.exists() {
            return load_scenario(path);
        }
        match bundled(&self.scenario) {
            Ok(s) => Ok(s),
            Err(_) => load_scenario(path),
        }
    }
}

fn exit_code(e: &Error) -> (u8, &'static str) {
    match e {
        Error::Parse(_) | Error::Validation(_) => (2, "parse"),
        Error::Io(_) => (4, "io"),
        _ => (3, "solver"),
    }
}

fn run(cli: Cli) -> pmpc::Result<()> {
    match cli.command {
        Command::Plan { input, out } => {
            let scn = input.load()?;
            let plan = plan_scenario(&scn)?;
            match out {
                Some(dir) => export::write_plan(&dir, &scn, &plan)?,
                None => print!("{}", export::plan_json(&scn, &plan)),
            }
        }
        Command::Run { input, out, benchmark, offline_refine } => {
            let scn = input.load()?;
            let log = run_scenario_with(&scn, RunOptions { offline_refine })?;
            if let Some(dir) = out {
                export::write_run(&dir, &log, benchmark)?;
            }
            print!("{}", export::summary_json(&log, benchmark));
        }
        Command::Benchmark { input, out, offline_refine } => {
            let scn = input.load()?;
            let log = run_scenario_with(&scn, RunOptions { offline_refine })?;
            if let Some(dir) = out {
                export::write_run(&dir, &log, true)?;
            }
            match solve_stats(&log.solve_times) {
                Some(s) => println!(
                    "{}: {} cycles, median {:.2} ms, p95 {:.2} ms, max {:.2} ms, mean {:.2} ms",
                    scn.name, s.cycles, s.median_ms, s.p95_ms, s.max_ms, s.mean_ms
                ),
                None => println!("{}: no solver cycles", scn.name),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (code, kind) = exit_code(&e);
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error[{kind}]: {msg}");
            ExitCode::from(code)
        }
    }
}
