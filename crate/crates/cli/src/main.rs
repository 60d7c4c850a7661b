use std::io::Write;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use cusp_spectra_cli::output::timestamp;
use cusp_spectra_cli::{execute, init_threads, CliError, Command, Overrides, RunConfig};

#[derive(Parser)]
#[command(name = "cusp-spectra", version, about = "Neumann (p,q)-eigenvalues and eigenvalue bounds on Hölder cusp domains")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Optimize the analytic upper bound on 1/lambda.
    Bound(Overrides),
    /// Compute the first nontrivial eigenvalue by finite elements.
    Solve(Overrides),
    /// Compare the numeric eigenvalue with the analytic bound.
    Verify(Overrides),
    /// Run verify over a parameter grid and write a CSV.
    Sweep(Overrides),
    /// Build the graded mesh and report its statistics.
    MeshInfo(Overrides),
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (command, o) = match cli.command {
        Cmd::Bound(o) => (Command::Bound, o),
        Cmd::Solve(o) => (Command::Solve, o),
        Cmd::Verify(o) => (Command::Verify, o),
        Cmd::Sweep(o) => (Command::Sweep, o),
        Cmd::MeshInfo(o) => (Command::MeshInfo, o),
    };
    let cfg = RunConfig::resolve(command, &o)?;
    init_threads()?;
    let started = timestamp();
    let report = execute(&cfg)?;
    match &cfg.out {
        Some(dir) => {
            report.outputs.commit(dir, &cfg, started)?;
            print!("{}", report.summary);
        }
        None => {
            eprint!("{}", report.summary);
            let primary = report.outputs.get(report.primary).unwrap_or_default();
            std::io::stdout().write_all(primary)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
