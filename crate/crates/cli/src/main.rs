use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;
use qbgraph_cli::config::RunConfig;
use qbgraph_cli::error::CliError;
use qbgraph_cli::{pipeline, Cli};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprintln!(
                "{}",
                CliError::new("usage", e.to_string().trim_end()).to_json()
            );
            return ExitCode::from(2);
        }
    };
    let env_workers = std::env::var("QBGRAPH_WORKERS").ok();
    let result = RunConfig::resolve(&cli.overrides, env_workers.as_deref())
        .and_then(|cfg| pipeline::run(cli.command, &cfg));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::FAILURE
        }
    }
}
