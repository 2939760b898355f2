mod args;
mod commands;

use std::process::ExitCode;

use anyhow::Result;

use args::{parse_args, Cli, Command};

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()?;
    }
    match &cli.command {
        Command::Aggregate(a) => commands::aggregate(a),
        Command::GenerateEscsub(a) => commands::generate(a),
        Command::Tune(a) => commands::tune_alpha(a),
        Command::Synthesize(a) => commands::synthesize(a),
        Command::Metrics(a) => commands::metrics(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Frontier(a) => commands::frontier(a),
    }
}

fn main() -> ExitCode {
    let cli = match parse_args(std::env::args_os()) {
        Ok(cli) => cli,
        Err(e) => match e.downcast::<clap::Error>() {
            Ok(clap_err) => clap_err.exit(),
            Err(e) => {
                eprintln!("error: {e:#}");
                return ExitCode::FAILURE;
            }
        },
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
