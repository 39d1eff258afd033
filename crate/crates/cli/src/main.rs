use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let args = hqc_cli::cli::Args::parse();
    match hqc_cli::cli::execute(&args) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
