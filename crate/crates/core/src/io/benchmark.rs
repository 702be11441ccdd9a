use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::{add_poisson_noise, observation_window, prepare_pure, simulate_spectrogram, uniform_theta_grid};
use crate::ladder::{Coupling, DensityMatrix, SidebandState, SidebandWindow};
use crate::squirrels::{squirrels_reconstruct, ReconstructionConfig};

/// Probe/pump ratio sweep over several preparation strengths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkConfig {
    /// Probe coupling over preparation coupling.
    pub ratios: Vec<f64>,
    /// Second-harmonic preparation couplings.
    pub prep_strengths: Vec<f64>,
    /// `None` benchmarks noise-free spectrograms.
    pub counts_per_spectrum: Option<f64>,
    pub phases: usize,
    /// Noise realizations per (ratio, strength) cell.
    pub repeats: usize,
    /// Prepared sidebands with population below this are cut from the true state.
    pub tail: f64,
    pub reconstruction: ReconstructionConfig,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        BenchmarkConfig {
            ratios: vec![0.5, 1.0, 2.0, 3.0, 3.5, 4.0, 5.0, 6.0],
            prep_strengths: (0..6).map(|i| 0.4 + (1.73 - 0.4) * i as f64 / 5.0).collect(),
            counts_per_spectrum: Some(1e4),
            phases: 24,
            repeats: 1,
            tail: 1e-6,
            reconstruction: ReconstructionConfig {
                support_stride: 2,
                ..Default::default()
            },
        }
    }
}

impl BenchmarkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.ratios.is_empty() || self.prep_strengths.is_empty() {
            return Err(Error::InvalidArgument("benchmark needs ratios and preparation strengths".into()));
        }
        if self.ratios.iter().chain(&self.prep_strengths).any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidArgument("ratios and strengths must be positive".into()));
        }
        if let Some(c) = self.counts_per_spectrum {
            if !(c > 0.0) {
                return Err(Error::InvalidArgument("counts per spectrum must be positive".into()));
            }
        }
        if self.phases == 0 {
            return Err(Error::EmptyGrid);
        }
        if self.repeats == 0 {
            return Err(Error::InvalidArgument("need at least one repeat".into()));
        }
        if !(self.tail > 0.0 && self.tail < 1.0) {
            return Err(Error::InvalidArgument("tail threshold must lie in (0, 1)".into()));
        }
        self.reconstruction.validate()
    }
}

/// Pure second-harmonic preparation cut to the sidebands above `tail`, renormalized.
pub fn truncated_preparation(g: f64, tail: f64) -> Result<DensityMatrix> {
    let state = prepare_pure(&Coupling::second_harmonic(g)?)?;
    let kept: Vec<i32> = state
        .window()
        .indices()
        .filter(|&n| state.amplitude(n).norm_sqr() >= tail)
        .collect();
    let lo = kept.iter().copied().min().unwrap_or(0).min(0);
    let hi = kept.iter().copied().max().unwrap_or(0).max(0);
    let window = SidebandWindow::new(lo, hi, 2)?;
    let cut = state.restrict(&window);
    let norm = cut.norm_sqr().sqrt();
    let amps = cut.amplitudes().iter().map(|c| c / norm).collect();
    Ok(SidebandState::new(window, amps)?.to_density())
}

/// One reconstruction of the benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkCell {
    pub ratio: f64,
    pub prep_strength: f64,
    pub seed: u64,
    /// Frobenius distance to the true state; NaN when the run failed.
    pub error: f64,
    pub alpha: f64,
    pub delta: f64,
    /// Residual at the selected alpha.
    pub residual: f64,
    /// Residual versus alpha was monotone.
    pub monotone: bool,
    /// `residual <= tau delta` and the next larger grid alpha exceeds it.
    pub bracketed: bool,
    pub converged: bool,
    pub failure: Option<String>,
}

/// Mean and spread over preparation strengths at one ratio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRow {
    pub ratio: f64,
    pub mean_error: f64,
    pub std_error: f64,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkTable {
    pub rows: Vec<BenchmarkRow>,
    pub cells: Vec<BenchmarkCell>,
}

fn cell_seed(seed: u64, index: usize) -> u64 {
    seed ^ (index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

fn run_cell(
    config: &BenchmarkConfig,
    ratio: f64,
    g: f64,
    seed: u64,
) -> Result<BenchmarkCell> {
    let truth = truncated_preparation(g, config.tail)?;
    let probe = Coupling::fundamental(ratio * g)?;
    let theta = uniform_theta_grid(config.phases, std::f64::consts::PI);
    let obs = observation_window(&truth.window().with_stride(1)?, &probe);
    let clean = simulate_spectrogram(&truth, &probe, &theta, &obs)?;
    let data = match config.counts_per_spectrum {
        Some(c) => add_poisson_noise(&clean, c, seed)?,
        None => clean,
    };
    let recon = ReconstructionConfig {
        state_window: Some(*truth.window()),
        ..config.reconstruction.clone()
    };
    let mut cell = BenchmarkCell {
        ratio,
        prep_strength: g,
        seed,
        error: f64::NAN,
        alpha: f64::NAN,
        delta: f64::NAN,
        residual: f64::NAN,
        monotone: true,
        bracketed: false,
        converged: false,
        failure: None,
    };
    match squirrels_reconstruct(&data, &probe, &recon) {
        Ok(report) => {
            let residual = *report.residual_history.last().expect("at least one iterate");
            let bound = recon.tau * report.delta;
            let flat = report.alpha_curve.iter().all(|&(_, r)| r <= bound);
            let above = report
                .alpha_curve
                .iter()
                .find(|&&(a, _)| a > report.alpha_selected * (1.0 + 1e-12));
            cell.bracketed = residual <= bound * (1.0 + 1e-12) && (flat || above.is_some_and(|&(_, r)| r > bound));
            cell.error = report.rho_hat.frobenius_distance(&truth);
            cell.alpha = report.alpha_selected;
            cell.delta = report.delta;
            cell.residual = residual;
            cell.converged = report.converged;
        }
        Err(e @ Error::NonMonotoneDiscrepancy { .. }) => {
            cell.monotone = false;
            cell.failure = Some(e.to_string());
        }
        Err(e) if e.is_numerical() => cell.failure = Some(e.to_string()),
        Err(e) => return Err(e),
    }
    Ok(cell)
}

/// Runs every (ratio, strength, repeat) cell in parallel; deterministic per `seed`.
pub fn benchmark_noise(config: &BenchmarkConfig, seed: u64) -> Result<BenchmarkTable> {
    config.validate()?;
    let mut jobs = Vec::new();
    for &ratio in &config.ratios {
        for &g in &config.prep_strengths {
            for _ in 0..config.repeats {
                jobs.push((ratio, g, cell_seed(seed, jobs.len())));
            }
        }
    }
    let cells: Vec<BenchmarkCell> = jobs
        .par_iter()
        .map(|&(ratio, g, s)| run_cell(config, ratio, g, s))
        .collect::<Result<_>>()?;

    let rows = config
        .ratios
        .iter()
        .map(|&ratio| {
            let errs: Vec<f64> = cells
                .iter()
                .filter(|c| c.ratio == ratio && c.error.is_finite())
                .map(|c| c.error)
                .collect();
            let failures = cells.iter().filter(|c| c.ratio == ratio && !c.error.is_finite()).count();
            let n = errs.len() as f64;
            let mean = errs.iter().sum::<f64>() / n;
            let var = if errs.len() > 1 {
                errs.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1.0)
            } else {
                0.0
            };
            BenchmarkRow {
                ratio,
                mean_error: mean,
                std_error: var.sqrt(),
                failures,
            }
        })
        .collect();
    Ok(BenchmarkTable { rows, cells })
}

impl BenchmarkTable {
    /// `ratio,mean_error,std_error,failures`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("ratio,mean_error,std_error,failures\n");
        for r in &self.rows {
            writeln!(out, "{:e},{:e},{:e},{}", r.ratio, r.mean_error, r.std_error, r.failures).unwrap();
        }
        out
    }

    pub fn cells_to_csv(&self) -> String {
        let mut out = String::from("ratio,prep_strength,seed,error,alpha,delta,residual,monotone,bracketed,converged\n");
        for c in &self.cells {
            writeln!(
                out,
                "{:e},{:e},{},{:e},{:e},{:e},{:e},{},{},{}",
                c.ratio, c.prep_strength, c.seed, c.error, c.alpha, c.delta, c.residual, c.monotone, c.bracketed, c.converged
            )
            .unwrap();
        }
        out
    }
}
