use std::path::{Path, PathBuf};
use std::process::ExitCode;

use affine_levy_cli::plot::{emit_plot_data, PlotKind};
use affine_levy_cli::{bundled, runner, Scenario};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "affine-levy",
    version,
    about = "Affine short-rate models driven by Lévy noise"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a scenario file, or a bundled scenario given as `bundled:<name>`.
    Run {
        scenario: String,
        #[arg(long)]
        out: PathBuf,
        /// Override a scenario field, e.g. `--set simulation.seed=7`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Emit plot-ready CSV from a run directory.
    Plot {
        dir: PathBuf,
        #[arg(long, value_enum)]
        which: PlotKind,
    },
    /// List the bundled scenarios.
    ListScenarios,
}

fn configure_threads() -> Result<(), String> {
    let Ok(raw) = std::env::var("AFFINE_LEVY_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| format!("AFFINE_LEVY_THREADS must be a positive integer, got {raw:?}"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

fn run(scenario: &str, out: &Path, set: &[String]) -> ExitCode {
    let text = match scenario.strip_prefix("bundled:") {
        Some(name) => match bundled::get(name) {
            Some(t) => t.to_string(),
            None => {
                eprintln!("error: no bundled scenario {name:?}; see `affine-levy list-scenarios`");
                return ExitCode::from(2);
            }
        },
        None => match std::fs::read_to_string(scenario) {
            Ok(t) => t,
            Err(e) => {
                eprintln!("error: cannot read {scenario}: {e}");
                return ExitCode::from(2);
            }
        },
    };
    let sc = match Scenario::parse(&text, set) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    match runner::run(&sc, out) {
        Ok(outcome) => {
            for f in &outcome.result.failures {
                eprintln!("FAIL {f}");
            }
            let status = if outcome.result.ok { "ok" } else { "failed" };
            println!("{}: {status}; results in {}", sc.name, out.display());
            ExitCode::from(outcome.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    match cli.cmd {
        Cmd::Run { scenario, out, set } => run(&scenario, &out, &set),
        Cmd::Plot { dir, which } => match emit_plot_data(&dir, which) {
            Ok(p) => {
                println!("{}", p.display());
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(1)
            }
        },
        Cmd::ListScenarios => {
            for (name, text) in bundled::SCENARIOS {
                let desc = serde_json::from_str::<serde_json::Value>(text)
                    .ok()
                    .and_then(|v| v["description"].as_str().map(str::to_string))
                    .unwrap_or_default();
                println!("{name:<20} {desc}");
            }
            ExitCode::SUCCESS
        }
    }
}
