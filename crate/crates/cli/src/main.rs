mod args;
mod commands;
mod failure;
mod output;
mod repro;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command, MonitorCmd};
use failure::Outcome;

fn dispatch(cli: &Cli) -> Outcome {
    match &cli.command {
        Command::Design(c) => commands::design(c),
        Command::Oc(c) => commands::oc(c),
        Command::Monitor(MonitorCmd::Init(c)) => commands::monitor_init(c),
        Command::Monitor(MonitorCmd::Observe(c)) => commands::monitor_observe(c),
        Command::Monitor(MonitorCmd::Status(c)) => commands::monitor_status(c),
        Command::Estimate(c) => commands::estimate_cmd(c),
        Command::Simulate(c) => commands::simulate_cmd(c),
        Command::Repro(c) => repro::run(c),
        Command::Run(c) => commands::run_config(&c.config),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    // clap exits with 2 on usage errors and 0 for --help / --version
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code)
        }
    }
}
