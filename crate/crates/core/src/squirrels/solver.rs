use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::operator::ForwardOperator;
use crate::error::{Error, Result};
use crate::forward::Spectrogram;
use crate::ladder::DensityMatrix;

/// Stopping rules of the projected accelerated-gradient solver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    /// Relative objective change between accepted steps.
    pub tolerance: f64,
    /// Length of the projected-gradient step `||x - P(x - grad/L)||`.
    pub kkt_tolerance: f64,
    pub max_steps: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tolerance: 1e-9,
            kkt_tolerance: 1e-8,
            max_steps: 20_000,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) || !(self.kkt_tolerance > 0.0) {
            return Err(Error::InvalidArgument("solver tolerances must be positive".into()));
        }
        if self.max_steps == 0 {
            return Err(Error::InvalidArgument("solver needs at least one step".into()));
        }
        Ok(())
    }
}

/// Output of one regularized solve.
#[derive(Debug, Clone)]
pub struct TikhonovSolution {
    pub rho: DensityMatrix,
    pub objective: f64,
    /// `||T(rho) - p||`.
    pub residual: f64,
    pub steps: usize,
    pub converged: bool,
    pub kkt: f64,
    /// Objective after each accepted step, starting with the initial point.
    pub objective_history: Vec<f64>,
}

/// Minimizes `||T(rho) - p||^2 + alpha ||rho - rho_prev||^2` over trace-one
/// PSD matrices on the operator's support lattice. `None` centres the
/// penalty at the zero matrix.
///
/// Running out of steps is not an error: the best iterate is returned with
/// `converged == false`.
pub fn solve_tikhonov_psd(
    op: &ForwardOperator,
    p: &Spectrogram,
    alpha: f64,
    rho_prev: Option<&DensityMatrix>,
) -> Result<TikhonovSolution> {
    solve_tikhonov_psd_with(op, p, alpha, rho_prev, &SolverOptions::default())
}

pub fn solve_tikhonov_psd_with(
    op: &ForwardOperator,
    p: &Spectrogram,
    alpha: f64,
    rho_prev: Option<&DensityMatrix>,
    opts: &SolverOptions,
) -> Result<TikhonovSolution> {
    let problem = Problem::new(op, p)?;
    let param = op.parameterization();
    let center = match rho_prev {
        Some(rho) => param.to_vector(rho),
        None => DVector::zeros(param.dim()),
    };
    let step = problem.solve(alpha, &center, None, opts)?;
    if !step.converged {
        log::warn!(
            "solver stopped after {} steps at alpha={alpha:.3e} (kkt {:.3e})",
            step.steps,
            step.kkt
        );
    }
    Ok(problem.finish(step))
}

/// Raw solver state for one solve.
#[derive(Debug, Clone)]
pub(crate) struct Step {
    pub x: DVector<f64>,
    pub objective: f64,
    pub residual: f64,
    pub steps: usize,
    pub converged: bool,
    pub kkt: f64,
    pub history: Vec<f64>,
}

/// Data-dependent pieces shared by every solve on the same spectrogram.
pub(crate) struct Problem<'a> {
    pub op: &'a ForwardOperator,
    p: DVector<f64>,
    b: DVector<f64>,
    p_sq: f64,
}

impl<'a> Problem<'a> {
    pub fn new(op: &'a ForwardOperator, s: &Spectrogram) -> Result<Self> {
        op.check_data(s)?;
        let p = DVector::from_vec(s.stacked());
        let b = op.matrix().tr_mul(&p);
        let p_sq = p.norm_squared();
        Ok(Problem { op, p, b, p_sq })
    }

    pub fn data(&self) -> &DVector<f64> {
        &self.p
    }

    fn objective(&self, x: &DVector<f64>, gx: &DVector<f64>, alpha: f64, c: &DVector<f64>) -> f64 {
        let misfit = (x.dot(gx) - 2.0 * self.b.dot(x) + self.p_sq).max(0.0);
        misfit + alpha * (x - c).norm_squared()
    }

    fn gradient(&self, x: &DVector<f64>, gx: &DVector<f64>, alpha: f64, c: &DVector<f64>) -> DVector<f64> {
        (gx - &self.b + (x - c) * alpha) * 2.0
    }

    pub fn residual(&self, x: &DVector<f64>) -> f64 {
        self.op.residual(x, &self.p)
    }

    /// Projected FISTA with function-value restart; accepted iterates have
    /// non-increasing objective.
    pub fn solve(
        &self,
        alpha: f64,
        center: &DVector<f64>,
        warm: Option<&DVector<f64>>,
        opts: &SolverOptions,
    ) -> Result<Step> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "regularization parameter must be positive, got {alpha}"
            )));
        }
        opts.validate()?;
        let param = self.op.parameterization();
        let gram = self.op.gram();
        let lip = 2.0 * (self.op.norm_sq() * 1.01 + alpha);

        let mut x = param.project(center);
        let mut gx = gram * &x;
        let mut fx = self.objective(&x, &gx, alpha, center);
        if let Some(w) = warm {
            let w = param.project(w);
            let gw = gram * &w;
            let fw = self.objective(&w, &gw, alpha, center);
            if fw < fx {
                x = w;
                gx = gw;
                fx = fw;
            }
        }

        let mut history = vec![fx];
        let mut y = x.clone();
        let mut gy = gx.clone();
        let mut t = 1.0_f64;
        let mut momentum = false;
        let mut converged = false;
        let mut kkt = f64::INFINITY;
        let mut steps = 0;

        while steps < opts.max_steps {
            steps += 1;
            let grad = self.gradient(&y, &gy, alpha, center);
            let x_new = param.project(&(&y - grad / lip));
            let gx_new = gram * &x_new;
            let f_new = self.objective(&x_new, &gx_new, alpha, center);

            if f_new > fx {
                if momentum {
                    y.copy_from(&x);
                    gy.copy_from(&gx);
                    t = 1.0;
                    momentum = false;
                    continue;
                }
                // a plain projected-gradient step cannot improve: numerical floor
                kkt = (&x_new - &x).norm();
                converged = kkt <= opts.kkt_tolerance.max(1e-6);
                break;
            }

            let t_new = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            let beta = (t - 1.0) / t_new;
            let rel = (fx - f_new) / f_new.abs().max(f64::MIN_POSITIVE);
            let plain_step = !momentum;
            let step_len = (&x_new - &x).norm();

            y = &x_new + (&x_new - &x) * beta;
            gy = &gx_new + (&gx_new - &gx) * beta;
            x = x_new;
            gx = gx_new;
            fx = f_new;
            t = t_new;
            momentum = beta > 0.0;
            history.push(fx);

            if rel <= opts.tolerance || step_len <= opts.kkt_tolerance * 1e-2 {
                kkt = if plain_step {
                    step_len
                } else {
                    let g = self.gradient(&x, &gx, alpha, center);
                    (&x - param.project(&(&x - g / lip))).norm()
                };
                if kkt <= opts.kkt_tolerance {
                    converged = true;
                    break;
                }
            }
        }
        if !converged && kkt.is_infinite() {
            let g = self.gradient(&x, &gx, alpha, center);
            kkt = (&x - param.project(&(&x - g / lip))).norm();
        }
        let residual = self.residual(&x);
        Ok(Step {
            x,
            objective: fx,
            residual,
            steps,
            converged,
            kkt,
            history,
        })
    }

    pub fn finish(&self, step: Step) -> TikhonovSolution {
        TikhonovSolution {
            rho: self.op.parameterization().to_density(&step.x),
            objective: step.objective,
            residual: step.residual,
            steps: step.steps,
            converged: step.converged,
            kkt: step.kkt,
            objective_history: step.history,
        }
    }
}
