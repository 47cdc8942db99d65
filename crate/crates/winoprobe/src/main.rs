use std::process::ExitCode;

use clap::Parser;
use winoprobe::cli::{run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut stdout = std::io::stdout().lock();
    match run(cli, &mut stdout) {
        Ok(status) => ExitCode::from(status.code()),
        Err(e) => {
            eprintln!("winoprobe: {e}");
            ExitCode::from(e.status().code())
        }
    }
}
