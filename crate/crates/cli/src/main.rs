use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = nhfa_cli::Cli::parse();
    match nhfa_cli::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("nhfa: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
