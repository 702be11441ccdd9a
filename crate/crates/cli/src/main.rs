use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

mod commands;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Parser)]
#[command(name = "squirrels", version, about = "Sideband-state simulation and density-matrix tomography")]
pub struct Cli {
    /// Run configuration (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    /// Format of tabular outputs.
    #[arg(long, global = true, value_enum, default_value = "csv")]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a spectrogram from the configured preparation and probe.
    Simulate,
    /// Reconstruct a density matrix from a spectrogram.
    Reconstruct {
        /// Spectrogram (.csv or .json).
        #[arg(long)]
        input: PathBuf,
    },
    /// Retrieve sideband phases from a weak-probe spectrogram.
    Rabbitt {
        #[arg(long)]
        input: PathBuf,
    },
    /// Discrete Wigner function of a density matrix.
    Wigner {
        /// Density matrix (.json).
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 256)]
        time_samples: usize,
    },
    /// Temporal density and pulse metrics of a density matrix or the configured drift.
    PulseMetrics {
        /// Density matrix (.json); without it the configured attosecond pipeline is used.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long, default_value_t = 4096)]
        samples: usize,
    },
    /// Fit coupling constants.
    FitG {
        /// `sideband,population` CSV for a single-color fit, or a spectrogram for a two-color fit.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        two_color: bool,
    },
    /// Fit the sideband comb of a raw energy spectrum.
    ExtractSidebands {
        /// `energy,counts` CSV (eV relative to the zero-loss line).
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 1.55)]
        photon_energy: f64,
        #[arg(long)]
        no_background: bool,
    },
    /// Reconstruction error versus probe/pump ratio under Poisson noise.
    BenchmarkNoise,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Ok(v) = std::env::var("SQUIRRELS_THREADS") {
        match v.parse::<usize>() {
            Ok(n) if n > 0 => {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                    log::warn!("could not size the thread pool: {e}");
                }
            }
            _ => {
                eprintln!("error: SQUIRRELS_THREADS must be a positive integer, got `{v}`");
                return ExitCode::from(1);
            }
        }
    }
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 2 } else { 1 })
        }
    }
}
