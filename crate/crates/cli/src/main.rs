use std::process::ExitCode;

use clap::Parser;
use phenoflow_cli::commands::configure_threads;
use phenoflow_cli::{run, Cli};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    if let Err(e) = configure_threads().and_then(|_| run(&cli)) {
        eprintln!("error: {e}");
        return ExitCode::from(e.exit_code() as u8);
    }
    ExitCode::SUCCESS
}
