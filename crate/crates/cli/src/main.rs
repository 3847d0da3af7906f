use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "fml", version, about = "Mean-field fermion dynamics experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run {
        config: PathBuf,
        /// Overwrite an existing artifact directory.
        #[arg(long)]
        force: bool,
        /// Worker threads.
        #[arg(long, env = "FML_JOBS")]
        jobs: Option<usize>,
    },
    /// Check a config against the size and step guards without running it.
    Validate { config: PathBuf },
    /// Summarise an artifact directory.
    Info { dir: PathBuf },
    /// List the registered experiments.
    Experiments,
}

fn exit(code: i32) -> ExitCode {
    ExitCode::from(code as u8)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, force, jobs } => {
            let jobs = jobs.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
            fml_cli::run(&config, force, jobs).map(|report| {
                match &report.failure {
                    None => println!("ok: {}", report.out_dir.display()),
                    Some(f) => eprintln!("numerical failure: {} (partial artifacts in {})", f.message, report.out_dir.display()),
                }
                report.exit_code()
            })
        }
        Command::Validate { config } => fml_cli::validate(&config).map(|report| {
            print!("{report}");
            fml_cli::EXIT_OK
        }),
        Command::Info { dir } => fml_cli::info(&dir).map(|info| {
            print!("{info}");
            fml_cli::EXIT_OK
        }),
        Command::Experiments => {
            for e in fml_cli::experiments() {
                println!("{:<20} {}", e.name(), e.describe());
            }
            Ok(fml_cli::EXIT_OK)
        }
    };
    match result {
        Ok(code) => exit(code),
        Err(e) => {
            eprintln!("error: {e}");
            exit(e.code)
        }
    }
}
