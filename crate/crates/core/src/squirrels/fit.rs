use std::f64::consts::PI;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
#[cfg(doc)]
use crate::forward::two_color_amplitudes;
use crate::forward::Spectrogram;
use crate::ladder::{bessel_j_sequence, Coupling};

const G_MAX: f64 = 10.0;
const SCAN_STEP: f64 = 0.01;
const TIE: f64 = 1e-6;

/// Result of fitting `J_N(2|g|)^2` to a single-color spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SingleColorFit {
    pub magnitude: f64,
    pub residual: f64,
    /// Input had to be rescaled to unit sum.
    pub renormalized: bool,
}

fn check_populations(populations: &[f64]) -> Result<(Vec<f64>, bool)> {
    if populations.is_empty() {
        return Err(Error::InvalidArgument("empty spectrum".into()));
    }
    if populations.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(Error::InvalidArgument(
            "populations must be finite and non-negative".into(),
        ));
    }
    let total: f64 = populations.iter().sum();
    if total <= 0.0 {
        return Err(Error::InvalidArgument("spectrum has no weight".into()));
    }
    if (total - 1.0).abs() > 1e-6 {
        log::warn!("spectrum sums to {total:.6}; renormalizing");
        Ok((populations.iter().map(|p| p / total).collect(), true))
    } else {
        Ok((populations.to_vec(), false))
    }
}

fn single_color_residual(p: &[f64], n_min: i32, g: f64) -> f64 {
    let n_max = n_min + p.len() as i32 - 1;
    let top = n_min.unsigned_abs().max(n_max.unsigned_abs()) as usize;
    let j = bessel_j_sequence(top, 2.0 * g);
    p.iter()
        .enumerate()
        .map(|(i, &pn)| {
            let n = (n_min + i as i32).unsigned_abs() as usize;
            (pn - j[n] * j[n]).powi(2)
        })
        .sum()
}

/// Golden-section minimum of `f` on `[a, b]`.
fn golden<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    if fc <= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Least-squares `|g|` for a single-color spectrum whose first entry is sideband `n_min`.
///
/// Dense scan over `[0, 10]` followed by golden-section refinement of every
/// local minimum; near-ties resolve to the smaller coupling.
pub fn fit_g_single_color(populations: &[f64], n_min: i32) -> Result<SingleColorFit> {
    let (p, renormalized) = check_populations(populations)?;
    let f = |g: f64| single_color_residual(&p, n_min, g);
    let n = (G_MAX / SCAN_STEP).round() as usize;
    let grid: Vec<f64> = (0..=n).map(|i| i as f64 * SCAN_STEP).collect();
    let vals: Vec<f64> = grid.iter().map(|&g| f(g)).collect();

    let mut candidates: Vec<(f64, f64)> = Vec::new();
    for i in 0..=n {
        let left = if i == 0 { f64::INFINITY } else { vals[i - 1] };
        let right = if i == n { f64::INFINITY } else { vals[i + 1] };
        if vals[i] <= left && vals[i] <= right {
            let a = grid[i.saturating_sub(1)];
            let b = grid[(i + 1).min(n)];
            let (g, r) = golden(f, a, b, 1e-10);
            let (g, r) = if vals[i] < r { (grid[i], vals[i]) } else { (g, r) };
            candidates.push((g, r));
        }
    }
    let best = candidates
        .iter()
        .map(|c| c.1)
        .fold(f64::INFINITY, f64::min);
    let (magnitude, residual) = candidates
        .into_iter()
        .filter(|c| c.1 <= best + TIE)
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .ok_or_else(|| Error::Fit("no minimum found".into()))?;
    Ok(SingleColorFit {
        magnitude,
        residual,
        renormalized,
    })
}

/// Result of fitting a pure two-color spectrogram.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TwoColorFit {
    pub g1: f64,
    pub g2: f64,
    /// Phase offset, reported in `[0, pi)` (the spectrogram is `pi`-periodic).
    pub theta_offset: f64,
    pub residual: f64,
    /// Residual after each accepted descent step of the winning start.
    pub history: Vec<f64>,
}

struct TwoColorModel<'a> {
    s: &'a Spectrogram,
}

impl TwoColorModel<'_> {
    /// Same populations as [`two_color_amplitudes`], with the Bessel tables
    /// computed once per parameter point instead of once per phase.
    fn residual(&self, x: &[f64; 3]) -> f64 {
        let (g1, g2, t0) = (x[0], x[1], x[2]);
        let (Ok(c1), Ok(c2)) = (Coupling::fundamental(g1), Coupling::second_harmonic(g2)) else {
            return f64::INFINITY;
        };
        let s1 = c1.reach_steps() as i32;
        let s2 = c2.reach_steps() as i32;
        let j1 = bessel_j_sequence(s1 as usize, 2.0 * g1);
        let j2 = bessel_j_sequence(s2 as usize, 2.0 * g2);
        let signed = |j: &[f64], n: i32| {
            let v = j[n.unsigned_abs() as usize];
            if n < 0 && n % 2 != 0 {
                -v
            } else {
                v
            }
        };
        let w = self.s.window();
        let mut total = 0.0;
        for (col, &theta) in self.s.theta_grid().iter().enumerate() {
            let phase = Complex64::from_polar(1.0, theta + t0);
            // e^{i r phase} for r in [-s1, s1]
            let mut rot = vec![Complex64::new(1.0, 0.0); (2 * s1 + 1) as usize];
            for r in 1..=s1 as usize {
                rot[s1 as usize + r] = rot[s1 as usize + r - 1] * phase;
                rot[s1 as usize - r] = rot[s1 as usize + r].conj();
            }
            for (row, n) in w.indices().enumerate() {
                let mut acc = Complex64::new(0.0, 0.0);
                for m in -s2..=s2 {
                    let r = n - 2 * m;
                    if r.abs() <= s1 {
                        acc += rot[(r + s1) as usize] * (signed(&j1, r) * signed(&j2, m));
                    }
                }
                total += (acc.norm_sqr() - self.s.populations()[(row, col)]).powi(2);
            }
        }
        total
    }
}

const LOWER: [f64; 3] = [0.0, 0.0, f64::NEG_INFINITY];
const UPPER: [f64; 3] = [G_MAX, G_MAX, f64::INFINITY];

fn coordinate_descent(model: &TwoColorModel, start: [f64; 3]) -> ([f64; 3], f64, Vec<f64>) {
    let mut x = start;
    let mut fx = model.residual(&x);
    let mut history = vec![fx];
    let mut step = [0.25, 0.25, 0.2];
    for _ in 0..500 {
        let mut improved = false;
        for k in 0..3 {
            let a = (x[k] - step[k]).max(LOWER[k]);
            let b = (x[k] + step[k]).min(UPPER[k]);
            let (xk, fk) = golden(
                |v| {
                    let mut y = x;
                    y[k] = v;
                    model.residual(&y)
                },
                a,
                b,
                1e-3 * step[k],
            );
            if fk < fx {
                x[k] = xk;
                fx = fk;
                history.push(fx);
                improved = true;
            }
        }
        if !improved {
            for s in step.iter_mut() {
                *s *= 0.5;
            }
            if step[0] < 1e-9 {
                break;
            }
        }
    }
    (x, fx, history)
}

/// Least-squares `(|g1|, |g2|, theta offset)` for a pure two-color spectrogram.
///
/// A coarse grid picks 8 starting points; each is polished by coordinate
/// descent with golden-section line searches.
pub fn fit_pure_two_color(s: &Spectrogram) -> Result<TwoColorFit> {
    if s.theta_grid().len() < 2 {
        return Err(Error::InvalidArgument(
            "two-color fit needs at least two phase columns".into(),
        ));
    }
    let model = TwoColorModel { s };
    let mut coarse: Vec<([f64; 3], f64)> = Vec::new();
    for i in 1..=24 {
        for j in 0..=12 {
            for k in 0..8 {
                let x = [0.25 * i as f64, 0.25 * j as f64, PI * k as f64 / 8.0];
                coarse.push((x, model.residual(&x)));
            }
        }
    }
    coarse.sort_by(|a, b| a.1.total_cmp(&b.1));
    let starts: Vec<[f64; 3]> = coarse.iter().take(8).map(|c| c.0).collect();

    let best = starts
        .iter()
        .map(|&x0| coordinate_descent(&model, x0))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("eight starts");
    let (x, residual, history) = best;
    if !residual.is_finite() {
        return Err(Error::Fit("two-color model could not be evaluated".into()));
    }
    Ok(TwoColorFit {
        g1: x[0],
        g2: x[1],
        theta_offset: x[2].rem_euclid(PI),
        residual,
        history,
    })
}
