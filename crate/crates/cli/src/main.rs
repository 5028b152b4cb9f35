mod args;
mod commands;
mod exit;
mod runner;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};
use exit::{classify, Outcome};

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => return,
        1 => tracing_subscriber::filter::LevelFilter::INFO,
        2 => tracing_subscriber::filter::LevelFilter::DEBUG,
        _ => tracing_subscriber::filter::LevelFilter::TRACE,
    };
    tracing_subscriber::fmt().with_max_level(level).with_writer(std::io::stderr).init();
}

fn dispatch(cli: &Cli) -> anyhow::Result<Outcome> {
    match &cli.command {
        Command::Guard(args) => commands::guard::run(cli, args),
        Command::Eval(cmd) => commands::eval::run(cli, cmd),
        Command::Memory(cmd) => commands::memory::run(cli, cmd),
        Command::Bench(cmd) => commands::bench::run(cli, cmd),
        Command::Serve(args) => commands::serve::run(cli, args),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(Outcome::Config.code()) } else { ExitCode::SUCCESS };
        }
    };
    init_logging(cli.verbose);
    let outcome = dispatch(&cli).unwrap_or_else(|err| {
        eprintln!("error: {err:#}");
        classify(&err)
    });
    ExitCode::from(outcome.code())
}
