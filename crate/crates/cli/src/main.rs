mod args;
mod commands;
mod report;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command, Resolve, UsageError};

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::GenSynthetic(a) => commands::gen_synthetic(a.merged()?),
        Command::Train(a) => commands::train_cmd(a.merged()?),
        Command::EvalForecast(a) => commands::eval_forecast(a.merged()?),
        Command::Route(a) => commands::route_cmd(a.merged()?),
        Command::BenchPredict(a) => commands::bench_predict(a.merged()?),
        Command::Contribution(a) => commands::contribution(a.merged()?),
        Command::ProbeCommunities(a) => commands::probe_communities(a.merged()?),
        Command::ExportEmbeddings(a) => commands::export_embeddings(a.merged()?),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
