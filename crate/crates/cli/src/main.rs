use std::process::ExitCode;

use clap::Parser;
use dheb::{commands, execute, Cli};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let default_level = commands::configured_log_level(&cli).unwrap_or_else(|| "info".into());
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("DHEB_LOG", default_level)).init();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("dheb: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
