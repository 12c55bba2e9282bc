use std::process::ExitCode;

use clap::Parser;
use satlms_cli::args::Cli;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = std::env::var("SATLMS_THREADS").ok();
    if let Err(e) = satlms_cli::init_threads(threads.as_deref()) {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    let code = match satlms_cli::run(&cli) {
        Ok(code) => code,
        Err(e) if satlms_cli::is_broken_pipe(&e) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            satlms_cli::exit_code(&e)
        }
    };
    ExitCode::from(code as u8)
}
