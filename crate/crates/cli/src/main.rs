use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sar_cli::config;
use sar_cli::verify::{run_suite, SUITES};
use sar_cli::{render_summary, run, RunOptions, SimOverrides, EXIT_FAILURE, EXIT_USAGE};

#[derive(Parser)]
#[command(
    name = "sarsim",
    version,
    about = "Simulate planar articulated robots on rooted trees"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario from a config file or a built-in name.
    Run {
        /// Config path (`.toml` may be omitted) or built-in scenario name.
        target: String,
        /// Integration step (s).
        #[arg(long)]
        dt: Option<f64>,
        /// Simulated time (s).
        #[arg(long)]
        duration: Option<f64>,
        /// Project onto the constraint manifold after every step.
        #[arg(long)]
        projection: Option<bool>,
        /// Record every k-th step.
        #[arg(long)]
        record_every: Option<usize>,
        /// Output directory [default: out/<scenario name>].
        #[arg(long)]
        out: Option<PathBuf>,
        /// Skip the SVG figures.
        #[arg(long)]
        no_plots: bool,
    },
    /// Run self-check suites: graph, dynamics, control, oracle or all.
    Verify {
        #[arg(default_value = "all")]
        suite: String,
    },
    /// Write a built-in scenario as an editable config file.
    Export { name: String, path: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            target,
            dt,
            duration,
            projection,
            record_every,
            out,
            no_plots,
        } => {
            let opts = RunOptions {
                target,
                overrides: SimOverrides {
                    dt,
                    duration,
                    projection,
                    record_every,
                },
                out,
                plots: !no_plots,
            };
            match run(&opts) {
                Ok(report) => {
                    let mut text = format!(
                        "scenario: {}\n{}",
                        report.origin,
                        render_summary(&report.summary)
                    );
                    for f in &report.files {
                        text.push_str(&format!("wrote {}\n", f.display()));
                    }
                    emit(&text);
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(e.exit_code())
                }
            }
        }
        Command::Verify { suite } => {
            let Some(checks) = run_suite(&suite) else {
                eprintln!(
                    "error: unknown suite {suite:?}; available: {}",
                    SUITES.join(", ")
                );
                return ExitCode::from(EXIT_USAGE);
            };
            let failed = checks.iter().filter(|c| !c.passed()).count();
            let mut text: String = checks.iter().map(|c| format!("{c}\n")).collect();
            text.push_str(&format!("{} checks, {failed} failed\n", checks.len()));
            emit(&text);
            if failed == 0 {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_FAILURE)
            }
        }
        Command::Export { name, path } => match config::export(&name, &path) {
            Ok(()) => {
                emit(&format!("wrote {}\n", path.display()));
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(EXIT_USAGE)
            }
        },
    }
}

/// Prints to stdout, tolerating a closed pipe.
fn emit(text: &str) {
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
}
