use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mrtp_cli::{batch, load_scenario, run, write_outputs};

/// Decentralized multi-robot trajectory planning simulator.
#[derive(Debug, Parser)]
#[command(name = "mrtp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one scenario and write its logs.
    Run {
        /// Scenario file, or the name of a bundled scenario.
        scenario: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run seeds 0..N with randomized spawns and report the success rate.
    Batch {
        scenario: PathBuf,
        #[arg(long)]
        seeds: u64,
        /// Also write every run's logs under DIR/seed_<n>.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a scenario file against the schema.
    Validate { scenario: PathBuf },
}

const EXIT_INVALID: u8 = 2;
const EXIT_FAILURES: u8 = 3;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let path = match &cli.command {
        Command::Run { scenario, .. } | Command::Batch { scenario, .. } | Command::Validate { scenario } => scenario,
    };
    let scenario = match load_scenario(path) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("{}: {e}", path.display());
            return ExitCode::from(EXIT_INVALID);
        }
    };

    match cli.command {
        Command::Validate { .. } => {
            println!("{}: ok ({} robots)", scenario.name, scenario.robots.len());
            ExitCode::SUCCESS
        }
        Command::Run { out, seed, .. } => {
            let (report, logs) = run(&scenario, seed);
            if let Err(e) = write_outputs(&scenario, &report, &logs, &out) {
                eprintln!("writing {}: {e}", out.display());
                return ExitCode::FAILURE;
            }
            println!(
                "{} seed {}: {} after {:.2} s, {} collisions, max goal error {:.3} m",
                report.scenario,
                report.seed,
                report.failure.map_or("success", |f| f.as_str()),
                report.simulated_time,
                report.collisions.len(),
                report.robots.iter().map(|r| r.final_error).fold(0.0, f64::max)
            );
            if report.success {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_FAILURES)
            }
        }
        Command::Batch { seeds, out, .. } => {
            if seeds == 0 {
                eprintln!("--seeds must be at least 1");
                return ExitCode::from(EXIT_INVALID);
            }
            let report = match batch(&scenario, seeds, out.as_deref()) {
                Ok(r) => r,
                Err(e) => {
                    eprintln!("writing batch outputs: {e}");
                    return ExitCode::FAILURE;
                }
            };
            for r in &report.runs {
                println!("seed {:>3}: {}", r.seed, r.failure.map_or("success", |f| f.as_str()));
            }
            let failures: Vec<String> = report.failures.iter().map(|(k, n)| format!("{k}={n}")).collect();
            println!(
                "{}: success rate {:.3} over {} seeds{}",
                report.scenario,
                report.success_rate,
                report.runs.len(),
                if failures.is_empty() { String::new() } else { format!(" ({})", failures.join(", ")) }
            );
            if report.runs.iter().all(|r| r.success) {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_FAILURES)
            }
        }
    }
}
