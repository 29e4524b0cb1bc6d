//! Command-line entry point.
//!
//! Exit codes: 0 success (feasible and flat), 1 runtime or invariant
//! failure, 2 config parse/validation error, 3 terminal infeasibility.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use mrbsde::Error;
use mrbsde_cli::config::ScenarioConfig;
use mrbsde_cli::run;

#[derive(Parser)]
#[command(name = "mrbsde", about = "Solve a mean-reflected BSDE scenario")]
struct Cli {
    /// Scenario config file (TOML).
    scenario: PathBuf,
    /// Override the ensemble seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default: config value, else `out`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run a convergence study instead of a single solve:
    /// penalty | grid | paths | picard.
    #[arg(long)]
    study: Option<String>,
    /// Absolute flatness tolerance override.
    #[arg(long)]
    tol_flat: Option<f64>,
    /// Absolute feasibility tolerance override.
    #[arg(long)]
    tol_c: Option<f64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let text = match std::fs::read_to_string(&cli.scenario) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("cannot read {}: {e}", cli.scenario.display());
            return ExitCode::from(1);
        }
    };
    let cfg = match ScenarioConfig::parse(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(2);
        }
    };
    let scenario = match cfg.build(cli.seed) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(2);
        }
    };
    let out_dir = cli
        .out
        .clone()
        .or_else(|| scenario.out_dir.clone().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));

    if let Some(mode) = &cli.study {
        return match run::run_study(&cfg, &scenario, mode, cli.seed, &out_dir) {
            Ok(()) => ExitCode::SUCCESS,
            Err(Error::TerminalViolation { gap }) => {
                eprintln!("terminal constraint violated by {gap:.17e}");
                ExitCode::from(3)
            }
            Err(e) => {
                eprintln!("{e}");
                ExitCode::from(1)
            }
        };
    }

    let solution = match run::solve_scenario(&scenario) {
        Ok(s) => s,
        Err(Error::TerminalViolation { gap }) => {
            eprintln!("terminal constraint violated by {gap:.17e}");
            return ExitCode::from(3);
        }
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(1);
        }
    };
    let outcome = run::evaluate(&scenario, solution, cli.tol_c, cli.tol_flat);
    if let Err(e) = run::write_outputs(&scenario, &outcome, &out_dir) {
        eprintln!("{e}");
        return ExitCode::from(1);
    }
    println!("Y0 = {:.17e}", outcome.y0);
    println!("K_T = {:.17e}", outcome.solution.k.total());
    if outcome.feasible && outcome.flat {
        println!("status: ok");
        ExitCode::SUCCESS
    } else {
        println!(
            "status: invariant failure (feasible: {}, flat: {})",
            outcome.feasible, outcome.flat
        );
        ExitCode::from(1)
    }
}
