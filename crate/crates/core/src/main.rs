use clap::{Parser, ValueEnum};
use d2dcache::cli::{exit_code, load_config, run, Command};
use d2dcache::Error;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Cmd {
    /// Analytic metrics of the configured caching strategy.
    Eval,
    /// Optimize caching densities with the configured algorithm(s).
    Optimize,
    /// Monte-Carlo estimates for the configured caching strategy.
    Simulate,
    /// Data series of one figure (select it with figure.id).
    Figure,
}

#[derive(Debug, Parser)]
#[command(name = "d2dcache", version, about = "Trust-biased D2D caching: analysis, optimization and simulation")]
struct Args {
    #[arg(value_enum)]
    command: Cmd,
    /// Experiment config file (`block.key = value` lines).
    #[arg(long)]
    config: PathBuf,
    /// Override a config entry; repeatable. Lists accept `block.key.N=value`.
    #[arg(long = "set", value_name = "BLOCK.KEY=VALUE")]
    set: Vec<String>,
    /// Write CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override sim.seed.
    #[arg(long)]
    seed: Option<u64>,
}

fn configure_threads() -> Result<(), Error> {
    let Ok(v) = std::env::var("D2DCACHE_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| Error::Config {
            path: "D2DCACHE_THREADS".into(),
            message: format!("expected a positive integer, got `{v}`"),
        })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Io(e.to_string()))
}

fn main() -> ExitCode {
    let args = Args::parse();
    let command = match args.command {
        Cmd::Eval => Command::Eval,
        Cmd::Optimize => Command::Optimize,
        Cmd::Simulate => Command::Simulate,
        Cmd::Figure => Command::Figure,
    };
    let result = configure_threads()
        .and_then(|_| load_config(command, &args.config, &args.set, args.seed))
        .and_then(|cfg| run(command, &cfg))
        .and_then(|table| match &args.out {
            Some(path) => table.write_csv(std::fs::File::create(path)?),
            None => table.write_csv(std::io::stdout().lock()),
        });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
