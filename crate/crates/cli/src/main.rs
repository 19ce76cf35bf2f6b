use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = hzrl_cli::Cli::parse();
    match hzrl_cli::execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
