use std::process::ExitCode;

use clap::Parser;
use env_logger::Env;

use flagsim_cli::{exit_code, run, Cli};

fn main() -> ExitCode {
    env_logger::Builder::from_env(Env::new().filter_or("FLAGSIM_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
