use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sigma_cli::commands::{self, FitArgs, PredictArgs, RunArgs, SweepArgs};
use sigma_cli::error::{CliResult, EXIT_OK};

#[derive(Debug, Parser)]
#[command(name = "sigma", version, about = "Slow collapse of charge-1 S2 sigma-model solitons")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Evolve one initial condition and record the origin trace and slices
    Run(RunArgs),
    /// Geodesic-model height f(t) for given c and R
    Predict(PredictArgs),
    /// Extract (c, R) from a trace and/or fit hyperbolas to slices
    Fit(FitArgs),
    /// Run and fit a family of initial conditions
    Sweep(SweepArgs),
}

fn dispatch(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Run(args) => {
            let s = commands::cmd_run(&args)?;
            let last = s.output.trace.samples.last();
            println!(
                "{}: {} steps, halt = {}, f(0) = {} at t = {}",
                s.dir.display(),
                s.output.steps,
                s.output.halt,
                last.map_or(f64::NAN, |x| x.f),
                last.map_or(f64::NAN, |x| x.t)
            );
        }
        Command::Predict(args) => {
            commands::cmd_predict(&args)?;
        }
        Command::Fit(args) => {
            commands::cmd_fit(&args)?;
        }
        Command::Sweep(args) => {
            commands::cmd_sweep(&args)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::from(EXIT_OK as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
