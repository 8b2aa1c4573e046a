//! Command-line surface over the scene engine. Machine-readable output goes
//! to stdout as JSON; diagnostics go to stderr. Exit codes: 0 on success,
//! 2 on usage errors (malformed flags), 1 on runtime errors.

use std::io::Write;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod bench;
mod fit;
mod metrics;
mod prune;
mod render;
mod schedule;

/// Prints machine output. A closed stdout (downstream `head`, say) is not
/// an error.
fn emit(json: &str) -> anyhow::Result<()> {
    let mut out = std::io::stdout().lock();
    match writeln!(out, "{json}") {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        other => Ok(other?),
    }
}

#[derive(Parser)]
#[command(name = "splat4d", version, about = "Dynamic Gaussian surfel scene engine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a scene at a timestamp through a camera from a manifest.
    Render(render::Args),
    /// Fit a scene to a dataset by gradient descent.
    Fit(fit::Args),
    /// Pick intra-patch channels from opacity activation histograms.
    Prune(prune::Args),
    /// Print a multi-level token layout and its attention cost.
    Schedule(schedule::Args),
    /// Score rendered frames against reference frames.
    Metrics(metrics::Args),
    /// Time rendering of every manifest frame.
    Bench(bench::Args),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let run = match cli.command {
        Command::Render(args) => render::run(args),
        Command::Fit(args) => fit::run(args),
        Command::Prune(args) => prune::run(args),
        Command::Schedule(args) => schedule::run(args),
        Command::Metrics(args) => metrics::run(args),
        Command::Bench(args) => bench::run(args),
    };
    match run {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
