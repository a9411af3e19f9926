use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Parser, Subcommand};
use log::{error, info, LevelFilter};
use ocms_core::experiment::{
    run_basis, run_decay, run_experiment, validate_config, write_basis, write_decay,
    write_outputs, ExperimentConfig, RunOptions, Severity,
};
use ocms_core::Error;

#[derive(Parser)]
#[command(name = "ocms", version, about = "Multiscale Schrödinger convergence experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Directory receiving reports and exported data.
    #[arg(long, global = true, default_value = "out")]
    output_dir: PathBuf,

    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Directory for cached reference solutions.
    #[arg(long, global = true)]
    cache_dir: Option<PathBuf>,

    /// off, error, warn, info, debug or trace.
    #[arg(long, global = true, default_value = "info")]
    log_level: String,
}

#[derive(Subcommand)]
enum Command {
    /// Run the convergence sweep and write report.json, report.csv and series/.
    Run { config: PathBuf },
    /// Print the diagnostics of a configuration.
    Validate { config: PathBuf },
    /// Decay study of the global basis (decay/*.csv).
    Decay { config: PathBuf },
    /// Export a multiscale basis (basis/*).
    Basis { config: PathBuf },
}

const CONFIG_ERROR: u8 = 2;
const SOLVER_ERROR: u8 = 1;

fn load(path: &Path) -> Result<ExperimentConfig, ExitCode> {
    ExperimentConfig::from_path(path).map_err(|e| {
        error!("{e}");
        ExitCode::from(CONFIG_ERROR)
    })
}

fn fail(e: Error) -> ExitCode {
    error!("{e}");
    if let Error::Config(messages) = &e {
        for m in messages {
            error!("  {m}");
        }
    }
    ExitCode::from(if e.is_config_error() { CONFIG_ERROR } else { SOLVER_ERROR })
}

fn report_written(paths: &[PathBuf]) {
    for p in paths {
        info!("wrote {}", p.display());
    }
}

fn execute(cli: &Cli) -> Result<(), ExitCode> {
    match &cli.command {
        Command::Validate { config } => {
            let config = load(config)?;
            let diagnostics = validate_config(&config);
            for d in &diagnostics {
                println!("{d}");
            }
            if diagnostics.iter().any(|d| d.severity == Severity::Error) {
                return Err(ExitCode::from(CONFIG_ERROR));
            }
            println!("ok");
        }
        Command::Run { config } => {
            let config = load(config)?;
            let options = RunOptions {
                cache_dir: cli.cache_dir.clone(),
            };
            let output = run_experiment(&config, &options).map_err(fail)?;
            for m in &output.report.methods {
                for row in &m.rows {
                    println!(
                        "{:<16} N = {:>5}  err_L2 = {:.4e}  err_H1 = {:.4e}",
                        m.method, row.n_coarse, row.err_l2, row.err_h1
                    );
                }
            }
            report_written(&write_outputs(&output, &cli.output_dir).map_err(fail)?);
        }
        Command::Decay { config } => {
            let config = load(config)?;
            let profiles = run_decay(&config).map_err(fail)?;
            for p in &profiles {
                let beta = p.beta.map_or("n/a".to_string(), |b| format!("{b:.4}"));
                println!("node {:>4}: beta = {beta}, saturation = {}", p.node, p.saturation);
            }
            report_written(&write_decay(&profiles, &cli.output_dir).map_err(fail)?);
        }
        Command::Basis { config } => {
            let config = load(config)?;
            let (basis, summary) = run_basis(&config).map_err(fail)?;
            println!(
                "constraint residual {:.3e}, orthogonality probe {:.3e}",
                summary.constraint_residual, summary.orthogonality_probe
            );
            report_written(&write_basis(&basis, &summary, &cli.output_dir).map_err(fail)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match LevelFilter::from_str(&cli.log_level) {
        Ok(level) => level,
        Err(_) => {
            eprintln!("invalid log level `{}`", cli.log_level);
            return ExitCode::from(CONFIG_ERROR);
        }
    };
    env_logger::Builder::new().filter_level(level).init();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            error!("cannot configure thread pool: {e}");
            return ExitCode::from(CONFIG_ERROR);
        }
    }
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(code) => code,
    }
}
