use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use ionsqz::scenario::{self, OutputFormat, RunOptions, ScenarioConfig, ScenarioKind};

#[derive(Parser)]
#[command(name = "ionsqz", version, about = "Trapped-ion motional squeezing experiments from TOML configs")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Execute a scenario and write its run directory.
    Run {
        config: PathBuf,
        /// Output directory (default: runs/<config stem>).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Parallel sweep sub-runs.
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum)]
        format: Option<Format>,
    },
    /// Parse and check a config without running it.
    Validate { config: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

fn fail(e: &ionsqz::Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(scenario::exit_code(e) as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.cmd {
        Cmd::Validate { config } => match ScenarioConfig::load(&config).and_then(|c| c.validate().map(|_| c)) {
            Ok(c) => {
                println!("{}: ok ({})", config.display(), c.scenario.name());
                ExitCode::SUCCESS
            }
            Err(e) => fail(&e),
        },
        Cmd::Run { config, out, workers, seed, format } => {
            let opts = RunOptions {
                workers,
                seed,
                format: format.map(|f| match f {
                    Format::Csv => OutputFormat::Csv,
                    Format::Json => OutputFormat::Json,
                }),
            };
            let out = out.unwrap_or_else(|| scenario::default_out_dir(&config));
            match scenario::run_path(&config, &out, &opts) {
                Ok(m) => {
                    if m.scenario == ScenarioKind::DeriveParams {
                        println!("{}", scenario::describe(&m));
                    }
                    eprintln!(
                        "{}: {} files, manifest at {}",
                        m.scenario.name(),
                        m.outputs.len(),
                        out.join("manifest.json").display()
                    );
                    ExitCode::SUCCESS
                }
                Err(e) => fail(&e),
            }
        }
    }
}
