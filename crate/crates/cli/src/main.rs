use std::process::ExitCode;

use clap::{Parser, Subcommand};
use palmwatch_cli::analyze::{analyze, AnalyzeArgs};
use palmwatch_cli::serve::{serve, termination, ServeArgs};
use palmwatch_cli::simulate::{simulate, SimulateArgs};
use palmwatch_cli::CliError;

/// Palm infestation monitoring: simulate farms, analyze telemetry, serve the cloud API.
#[derive(Parser)]
#[command(name = "palmwatch", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a seeded farm simulation and write streams, digests and assessments.
    Simulate(SimulateArgs),
    /// Compare a telemetry log against a healthy baseline, window by window.
    Analyze(AnalyzeArgs),
    /// Run the HTTP and WebSocket service.
    Serve(ServeArgs),
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate(args) => {
            let summary = simulate(&args)?;
            for (id, c) in &summary.devices {
                println!(
                    "{id}: generated {} stored {} dropped {} digests {} assessments {}",
                    c.generated, c.stored, c.dropped, c.digests, c.assessments
                );
            }
            println!("wrote {}", args.output.display());
        }
        Command::Analyze(args) => {
            let report = analyze(&args)?;
            for a in report.assessments() {
                println!("{} {} fired {} -> {:?}", a.device_id, a.window_start, a.fired_count, a.likelihood);
            }
            println!("{} windows analyzed, wrote {}", report.windows.len(), args.output.display());
        }
        Command::Serve(args) => {
            let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::Input(e.to_string()))?;
            runtime.block_on(serve(&args, termination()))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
