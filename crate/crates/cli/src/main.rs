//! `tripartite` command-line runner.
//!
//! Exit status: 0 on success, 1 on I/O failure while writing artifacts,
//! 2 on configuration errors, 3 on numerical failures.

mod config;
mod presets;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "tripartite", version, about = "Run tripartite cavity-atom-mechanics experiments from TOML configs")]
struct Cli {
    /// Suppress progress messages on stderr.
    #[arg(short, long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute every run in a config and write artifacts plus manifest.json.
    Run {
        config: PathBuf,
        /// Write artifacts here instead of the config's output_dir.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Parse and check a config without running it; prints the resolved
    /// config as JSON.
    Validate { config: PathBuf },
    /// Shipped example configs.
    Presets {
        #[command(subcommand)]
        action: PresetAction,
    },
}

#[derive(Subcommand)]
enum PresetAction {
    /// Names and descriptions.
    List,
    /// Print a preset's TOML.
    Show { name: String },
}

const EXIT_IO: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

fn load(path: &PathBuf) -> Result<config::ResolvedConfig, ExitCode> {
    config::load(path)
        .and_then(|c| config::resolve(&c))
        .map_err(|report| {
            eprint!("{}: {report}", path.display());
            ExitCode::from(EXIT_CONFIG)
        })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Validate { config } => match load(&config) {
            Ok(resolved) => {
                println!("{}", serde_json::to_string_pretty(&resolved).expect("config serializes"));
                ExitCode::SUCCESS
            }
            Err(code) => code,
        },
        Command::Run { config, out } => {
            let resolved = match load(&config) {
                Ok(r) => r,
                Err(code) => return code,
            };
            let dir = out.unwrap_or_else(|| resolved.output_dir.clone());
            let quiet = cli.quiet;
            match run::run_all(&resolved, &dir, |line| {
                if !quiet {
                    eprintln!("{line}");
                }
            }) {
                Ok(manifest) => {
                    if !quiet {
                        eprintln!("manifest: {}", manifest.display());
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(match e {
                        run::RunError::Numerical { .. } => EXIT_NUMERICAL,
                        run::RunError::OutputDir { .. } => EXIT_CONFIG,
                        run::RunError::Io { .. } => EXIT_IO,
                    })
                }
            }
        }
        Command::Presets { action } => match action {
            PresetAction::List => {
                for p in presets::PRESETS {
                    println!("{:<8} {}", p.name, p.description);
                }
                ExitCode::SUCCESS
            }
            PresetAction::Show { name } => match presets::find(&name) {
                Some(p) => {
                    print!("{}", p.toml);
                    ExitCode::SUCCESS
                }
                None => {
                    eprintln!("unknown preset '{name}'; see `tripartite presets list`");
                    ExitCode::from(EXIT_CONFIG)
                }
            },
        },
    }
}
