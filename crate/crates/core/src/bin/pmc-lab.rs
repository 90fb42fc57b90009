use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use pmc_lab::harness::{run, ExperimentConfig, RunError, ValidationReport};

/// Output directory used when neither `--out-dir` nor the config sets one.
const OUT_DIR_ENV: &str = "PMC_LAB_OUT_DIR";

#[derive(Parser)]
#[command(name = "pmc-lab", version, about = "Min-max widths for prescribed mean curvature functionals")]
struct Cli {
    /// Override the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the output directory.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run { config: PathBuf },
    /// Check a config file without computing anything.
    Validate { config: PathBuf },
}

fn read(path: &Path) -> Result<String, RunError> {
    fs::read_to_string(path).map_err(|e| {
        RunError::Config(ValidationReport { violations: vec![format!("cannot read {}: {e}", path.display())] })
    })
}

fn execute(cli: Cli) -> Result<u8, RunError> {
    match cli.command {
        Command::Validate { config } => {
            let report = match ExperimentConfig::from_text(&read(&config)?) {
                Ok(_) => ValidationReport::default(),
                Err(r) => r,
            };
            println!("{report}");
            Ok(if report.is_ok() { 0 } else { 2 })
        }
        Command::Run { config } => {
            let mut cfg = ExperimentConfig::from_text(&read(&config)?).map_err(RunError::Config)?;
            if let Some(seed) = cli.seed {
                cfg.seed = seed;
            }
            let out_dir = cli
                .out_dir
                .or_else(|| cfg.out_dir.clone())
                .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
                .unwrap_or_else(|| PathBuf::from("pmc-lab-out"));
            if let Some(jobs) = cli.jobs {
                rayon::ThreadPoolBuilder::new()
                    .num_threads(jobs.max(1))
                    .build_global()
                    .map_err(|e| RunError::Io(std::io::Error::other(e)))?;
            }
            let manifest = run(&cfg, &out_dir)?;
            for a in &manifest.assertions {
                println!("{} {}: {}", if a.pass { "PASS" } else { "FAIL" }, a.name, a.detail);
            }
            println!("wrote {} files to {}", manifest.outputs.len() + 1, out_dir.display());
            Ok(manifest.exit_code())
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
