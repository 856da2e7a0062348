use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use flecs::experiment::{self, SweepParam};
use flecs::FlecsError;

/// Federated second-order experiments driven by TOML configs.
///
/// Outputs are written under $FLECS_OUTPUT_ROOT (default ./flecs-runs).
/// Exit codes: 0 ok, 1 configuration error, 2 runtime error.
#[derive(Parser)]
#[command(name = "flecs", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment.
    Run { config: PathBuf },
    /// Run one experiment per value of a config key.
    Sweep {
        config: PathBuf,
        /// Dotted key and values, e.g. sketch.m=1,4,16,64
        #[arg(long)]
        param: SweepParam,
    },
    /// Outer-join metrics CSVs on the iteration index.
    Compare {
        #[arg(required = true)]
        csv: Vec<PathBuf>,
        /// Write the merged table here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn execute(command: Command) -> Result<(), FlecsError> {
    match command {
        Command::Run { config } => {
            let out = experiment::run_experiment(&config)?;
            println!("{}", out.summary.to_text());
            println!("outputs: {}", out.dir.display());
        }
        Command::Sweep { config, param } => {
            for out in experiment::sweep(&config, &param)? {
                println!("{}", out.summary.to_text());
            }
        }
        Command::Compare { csv, out } => {
            let rows = match out {
                Some(path) => experiment::compare(&csv, std::fs::File::create(&path)?)?,
                None => experiment::compare(&csv, std::io::stdout().lock())?,
            };
            log::info!("merged {} runs over {rows} iterations", csv.len());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            let code = if e.use_stderr() { experiment::EXIT_CONFIG } else { experiment::EXIT_OK };
            return ExitCode::from(code as u8);
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(experiment::exit_code(&e) as u8)
        }
    }
}
