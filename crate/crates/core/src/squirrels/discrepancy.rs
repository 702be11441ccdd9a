use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::operator::{assemble_forward_operator_on, ForwardOperator};
use super::solver::{Problem, SolverOptions, Step};
use crate::error::{Error, Result};
use crate::forward::Spectrogram;
use crate::ladder::{Coupling, DensityMatrix, SidebandWindow};

/// Log-spaced regularization grid, in units of `||T||^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlphaGrid {
    pub lower: f64,
    pub upper: f64,
    pub points: usize,
}

impl Default for AlphaGrid {
    fn default() -> Self {
        AlphaGrid {
            lower: 1e-8,
            upper: 1e2,
            points: 40,
        }
    }
}

impl AlphaGrid {
    /// Ascending grid values scaled by `scale`.
    pub fn values(&self, scale: f64) -> Vec<f64> {
        let (a, b) = (self.lower.ln(), self.upper.ln());
        let n = self.points;
        (0..n)
            .map(|i| scale * (a + (b - a) * i as f64 / (n - 1) as f64).exp())
            .collect()
    }
}

/// Starting point of the proximal iteration.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialGuess {
    #[default]
    Zero,
    MaximallyMixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReconstructionConfig {
    /// Proximal (iterated Tikhonov) steps per regularization value.
    pub alpha_iterations: usize,
    /// Discrepancy safety factor, `> 1`.
    pub tau: f64,
    pub alpha_grid: AlphaGrid,
    /// Bisection stops once `alpha_hi / alpha_lo - 1` is below this.
    pub bisection_width: f64,
    pub solver: SolverOptions,
    pub initial_guess: InitialGuess,
    /// Relative slack tolerated when checking that the residual grows with alpha.
    pub monotone_tolerance: f64,
    /// Reconstruction window; inferred from the data when absent.
    pub state_window: Option<SidebandWindow>,
    /// Support stride of the inferred window.
    pub support_stride: u8,
}

impl Default for ReconstructionConfig {
    fn default() -> Self {
        ReconstructionConfig {
            alpha_iterations: 3,
            tau: 1.01,
            alpha_grid: AlphaGrid::default(),
            bisection_width: 0.05,
            solver: SolverOptions::default(),
            initial_guess: InitialGuess::Zero,
            monotone_tolerance: 1e-6,
            state_window: None,
            support_stride: 1,
        }
    }
}

impl ReconstructionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 1.0) {
            return Err(Error::InvalidArgument(format!("tau must exceed 1, got {}", self.tau)));
        }
        if self.alpha_iterations == 0 {
            return Err(Error::InvalidArgument("alpha_iterations must be at least 1".into()));
        }
        let g = &self.alpha_grid;
        if !(g.lower > 0.0) || !(g.upper > g.lower) || g.points < 2 {
            return Err(Error::InvalidArgument(format!(
                "alpha grid needs 0 < lower < upper and at least 2 points, got {g:?}"
            )));
        }
        if !(self.bisection_width > 0.0) {
            return Err(Error::InvalidArgument("bisection width must be positive".into()));
        }
        if !(self.monotone_tolerance >= 0.0) {
            return Err(Error::InvalidArgument("monotone tolerance must be non-negative".into()));
        }
        if !matches!(self.support_stride, 1 | 2) {
            return Err(Error::InvalidArgument("support stride must be 1 or 2".into()));
        }
        self.solver.validate()
    }
}

/// Iterated-Tikhonov chain at one alpha.
#[derive(Debug, Clone)]
pub(crate) struct Chain {
    pub alpha: f64,
    pub steps: Vec<Step>,
}

impl Chain {
    pub fn residual(&self) -> f64 {
        self.steps.last().map_or(f64::INFINITY, |s| s.residual)
    }

    fn warm(&self) -> Vec<DVector<f64>> {
        self.steps.iter().map(|s| s.x.clone()).collect()
    }

    fn converged(&self) -> bool {
        self.steps.iter().all(|s| s.converged)
    }
}

fn run_chain(
    problem: &Problem,
    alpha: f64,
    config: &ReconstructionConfig,
    warm: Option<&[DVector<f64>]>,
) -> Result<Chain> {
    let param = problem.op.parameterization();
    let mut center = match config.initial_guess {
        InitialGuess::Zero => DVector::zeros(param.dim()),
        InitialGuess::MaximallyMixed => {
            param.to_vector(&DensityMatrix::maximally_mixed(*param.window()))
        }
    };
    let mut steps = Vec::with_capacity(config.alpha_iterations);
    for j in 0..config.alpha_iterations {
        let start = warm.and_then(|w| w.get(j));
        let step = problem.solve(alpha, &center, start, &config.solver)?;
        center = step.x.clone();
        steps.push(step);
    }
    Ok(Chain { alpha, steps })
}

/// Discrepancy-principle choice of the regularization parameter.
#[derive(Debug, Clone)]
pub struct AlphaSelection {
    pub alpha: f64,
    /// Residual at the smallest grid alpha, the noise-level estimate.
    pub delta: f64,
    /// `(alpha, residual)` on the ascending grid.
    pub curve: Vec<(f64, f64)>,
    /// True when every grid alpha satisfied the discrepancy bound.
    pub flat: bool,
    pub warnings: Vec<String>,
    pub(crate) chain: Chain,
}

/// Selects alpha by the discrepancy principle on `config.alpha_grid`.
pub fn select_alpha_discrepancy(
    op: &ForwardOperator,
    p: &Spectrogram,
    config: &ReconstructionConfig,
) -> Result<AlphaSelection> {
    config.validate()?;
    let problem = Problem::new(op, p)?;
    select_with(&problem, config)
}

fn select_with(problem: &Problem, config: &ReconstructionConfig) -> Result<AlphaSelection> {
    let scale = problem.op.norm_sq().max(f64::MIN_POSITIVE);
    let grid = config.alpha_grid.values(scale);
    let mut warnings = Vec::new();

    // sweep from strong to weak regularization, warm-starting each chain
    let mut chains: Vec<Chain> = Vec::with_capacity(grid.len());
    let mut warm: Option<Vec<DVector<f64>>> = None;
    for &alpha in grid.iter().rev() {
        let chain = run_chain(problem, alpha, config, warm.as_deref())?;
        warm = Some(chain.warm());
        chains.push(chain);
    }
    chains.reverse();
    if chains.iter().any(|c| !c.converged()) {
        let n = chains.iter().filter(|c| !c.converged()).count();
        warnings.push(format!("{n} of {} grid solves hit the step limit", chains.len()));
    }

    let curve: Vec<(f64, f64)> = chains.iter().map(|c| (c.alpha, c.residual())).collect();
    let slack = 1e-9 * problem.data().norm();
    for w in curve.windows(2) {
        let ((a0, r0), (a1, r1)) = (w[0], w[1]);
        if r1 < r0 - config.monotone_tolerance * r0 - slack {
            return Err(Error::NonMonotoneDiscrepancy {
                alpha_prev: a0,
                prev: r0,
                alpha_next: a1,
                next: r1,
            });
        }
    }

    let delta = curve[0].1;
    let bound = config.tau * delta;
    let last_ok = curve.iter().rposition(|&(_, r)| r <= bound).unwrap_or(0);
    if last_ok == curve.len() - 1 {
        let msg = "residual curve is flat over the whole grid; using the smallest alpha".to_string();
        log::warn!("{msg}");
        warnings.push(msg);
        let chain = chains.swap_remove(0);
        return Ok(AlphaSelection {
            alpha: chain.alpha,
            delta,
            curve,
            flat: true,
            warnings,
            chain,
        });
    }

    let mut lo = chains.swap_remove(last_ok);
    let mut hi_alpha = curve[last_ok + 1].0;
    while hi_alpha / lo.alpha - 1.0 > config.bisection_width {
        let mid = (lo.alpha * hi_alpha).sqrt();
        let chain = run_chain(problem, mid, config, Some(&lo.warm()))?;
        if chain.residual() <= bound {
            lo = chain;
        } else {
            hi_alpha = mid;
        }
    }
    Ok(AlphaSelection {
        alpha: lo.alpha,
        delta,
        curve,
        flat: false,
        warnings,
        chain: lo,
    })
}

/// Everything produced by a reconstruction.
#[derive(Debug, Clone)]
pub struct ReconstructionReport {
    pub rho_hat: DensityMatrix,
    /// Every proximal iterate `rho^(1) ... rho^(J)` at the selected alpha; the last is `rho_hat`.
    pub iterates: Vec<DensityMatrix>,
    pub alpha_selected: f64,
    pub delta: f64,
    /// Residual `||T(rho^(j)) - p||` after each proximal iteration.
    pub residual_history: Vec<f64>,
    /// Objective after each accepted inner step of the final solve.
    pub objective_history: Vec<f64>,
    /// `||p|| / delta`.
    pub snr: f64,
    pub refit_spectrogram: Spectrogram,
    pub alpha_curve: Vec<(f64, f64)>,
    pub state_window: SidebandWindow,
    pub converged: bool,
    pub warnings: Vec<String>,
}

/// Discrepancy-selected, iterated-Tikhonov reconstruction of the state probed in `p`.
pub fn squirrels_reconstruct(
    p: &Spectrogram,
    probe: &Coupling,
    config: &ReconstructionConfig,
) -> Result<ReconstructionReport> {
    config.validate()?;
    let obs = p.window().with_stride(1)?;
    let state_window = match config.state_window {
        Some(w) => w,
        None => infer_state_window(p, probe, config.support_stride)?,
    };
    let op = assemble_forward_operator_on(probe, p.theta_grid(), &state_window, &obs)?;
    reconstruct_with_operator(&op, p, config)
}

/// As [`squirrels_reconstruct`] with a prebuilt operator.
pub fn reconstruct_with_operator(
    op: &ForwardOperator,
    p: &Spectrogram,
    config: &ReconstructionConfig,
) -> Result<ReconstructionReport> {
    config.validate()?;
    let problem = Problem::new(op, p)?;
    let selection = select_with(&problem, config)?;
    let chain = &selection.chain;
    let last = chain.steps.last().expect("at least one iteration");
    let param = op.parameterization();
    let rho_hat = param.to_density(&last.x);
    let refit_spectrogram = op.spectrogram_of(&last.x)?;
    let p_norm = problem.data().norm();
    let snr = if selection.delta > 0.0 {
        p_norm / selection.delta
    } else {
        f64::INFINITY
    };
    Ok(ReconstructionReport {
        rho_hat,
        iterates: chain.steps.iter().map(|s| param.to_density(&s.x)).collect(),
        alpha_selected: selection.alpha,
        delta: selection.delta,
        residual_history: chain.steps.iter().map(|s| s.residual).collect(),
        objective_history: last.history.clone(),
        snr,
        refit_spectrogram,
        alpha_curve: selection.curve.clone(),
        state_window: *op.state_window(),
        converged: chain.converged(),
        warnings: selection.warnings.clone(),
    })
}

/// Window wide enough for the state behind `p`, estimated from the spread of
/// the measured spectra minus the spread the probe itself adds.
pub fn infer_state_window(p: &Spectrogram, probe: &Coupling, support_stride: u8) -> Result<SidebandWindow> {
    let w = p.window();
    let mut mean_sum = 0.0;
    let mut var_sum = 0.0;
    let cols = p.theta_grid().len();
    for c in 0..cols {
        let total: f64 = (0..w.len()).map(|r| p.populations()[(r, c)]).sum();
        if total <= 0.0 {
            continue;
        }
        let mean: f64 = w
            .indices()
            .enumerate()
            .map(|(r, n)| n as f64 * p.populations()[(r, c)])
            .sum::<f64>()
            / total;
        let var: f64 = w
            .indices()
            .enumerate()
            .map(|(r, n)| (n as f64 - mean).powi(2) * p.populations()[(r, c)])
            .sum::<f64>()
            / total;
        mean_sum += mean;
        var_sum += var;
    }
    let mean = mean_sum / cols as f64;
    let h = probe.harmonic() as f64;
    let added = 2.0 * (h * probe.magnitude()).powi(2);
    let sigma = (var_sum / cols as f64 - added).max(0.0).sqrt();
    let half = (2.5 * sigma + 3.0).ceil();
    let stride = support_stride as i32;
    let round_out = |v: f64, up: bool| {
        let v = if up { v.ceil() as i32 } else { v.floor() as i32 };
        let q = v.div_euclid(stride) * stride;
        if up && q < v {
            q + stride
        } else {
            q
        }
    };
    let n_min = round_out((mean - half).min(-1.0), false).max(w.n_min());
    let n_max = round_out((mean + half).max(1.0), true).min(w.n_max());
    SidebandWindow::new(n_min.min(0), n_max.max(0), support_stride)
}
