//! `twoway`: inference for two-way clustered data from the command line.
//!
//! Exit codes: 0 success, 2 usage error, 3 data/schema error, 4 solver
//! non-convergence. All errors carry a machine-readable
//! `error[usage|data|solver]:` prefix on stderr.

mod args;
mod commands;
mod fail;

use clap::error::ErrorKind;
use clap::Parser;

use args::{Cli, Command};
use fail::CliResult;

fn dispatch(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Infer(a) => commands::run_infer(a.merged(|c| c.infer)?),
        Command::Diagnose(a) => commands::run_diagnose(a.merged(|c| c.diagnose)?),
        Command::Simulate(a) => commands::run_simulate(a.merged()?),
        Command::Limit(a) => commands::run_limit(a.merged()?),
        Command::PowerLoss(a) => commands::run_power_loss(a.merged()?),
        Command::Dyadic(a) => commands::run_dyadic(a.merged()?),
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            match err.kind() {
                // --help/--version print to stdout with status 0.
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{err}");
                    std::process::exit(0);
                }
                _ => {
                    eprintln!("error[usage]: {err}");
                    std::process::exit(2);
                }
            }
        }
    };
    if let Err(err) = dispatch(cli) {
        eprintln!("{err}");
        std::process::exit(err.exit_code());
    }
}
