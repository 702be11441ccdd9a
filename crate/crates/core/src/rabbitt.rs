//! Weak-probe interferometric retrieval of sideband phases.
//!
//! A weak fundamental probe mixes each even sideband pair `N - 1, N + 1`
//! into the odd sideband between them, whose population then oscillates as
//! `A + B cos(2 theta + pi + phi_{N-1} - phi_{N+1})`.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::forward::Spectrogram;
use crate::ladder::Coupling;

/// Largest probe coupling for which the first-order picture is used.
pub const MAX_PROBE: f64 = 0.5;
/// Below this `B / A` the fitted phase is flagged unreliable, as are orders
/// whose mean population is below `1e-12` of the spectrogram maximum.
pub const MIN_CONTRAST: f64 = 1e-3;

/// Cosine fit of one odd sideband.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OddSidebandFit {
    pub order: i32,
    /// `A`.
    pub offset: f64,
    /// `B >= 0`.
    pub amplitude: f64,
    /// `c` in `A + B cos(2 theta + c)`, in `(-pi, pi]`.
    pub phase: f64,
    /// `phi_{N+1} - phi_{N-1}`, in `(-pi, pi]`.
    pub phase_diff: f64,
    /// RMS fit residual relative to the RMS population.
    pub relative_residual: f64,
    pub reliable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RabbittResult {
    /// One fit per odd order whose even neighbours are both observed, ascending.
    pub fits: Vec<OddSidebandFit>,
    /// Even orders carrying a retrieved phase, ascending; always contains 0.
    pub even_orders: Vec<i32>,
    /// `phi_N` on `even_orders`, anchored at `phi_0 = 0`, in `(-pi, pi]`.
    pub cumulative_phases: Vec<f64>,
    /// `|c_N|` on `even_orders` from the phase-averaged even populations.
    pub magnitudes: Vec<f64>,
    /// False when any fit between `0` and `N` was unreliable.
    pub phase_reliable: Vec<bool>,
}

impl RabbittResult {
    /// `phi_{N+1} - phi_{N-1}` for odd `n`.
    pub fn phase_diff(&self, n: i32) -> Option<f64> {
        self.fits.iter().find(|f| f.order == n).map(|f| f.phase_diff)
    }

    /// Retrieved `phi_N` for even `n`.
    pub fn phase(&self, n: i32) -> Option<f64> {
        self.even_orders
            .iter()
            .position(|&k| k == n)
            .map(|i| self.cumulative_phases[i])
    }

    pub fn magnitude(&self, n: i32) -> Option<f64> {
        self.even_orders
            .iter()
            .position(|&k| k == n)
            .map(|i| self.magnitudes[i])
    }
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_phase(x: f64) -> f64 {
    let y = x.rem_euclid(2.0 * PI);
    if y > PI {
        y - 2.0 * PI
    } else {
        y
    }
}

/// Least-squares `(A, B, C)` of `A + B cos 2theta + C sin 2theta`.
fn fit_cosine(theta: &[f64], y: &[f64]) -> Option<(f64, f64, f64, f64)> {
    let mut normal = Matrix3::zeros();
    let mut rhs = Vector3::zeros();
    for (&t, &v) in theta.iter().zip(y) {
        let basis = Vector3::new(1.0, (2.0 * t).cos(), (2.0 * t).sin());
        normal += basis * basis.transpose();
        rhs += basis * v;
    }
    let coef = normal.lu().solve(&rhs)?;
    let sq: f64 = theta
        .iter()
        .zip(y)
        .map(|(&t, &v)| (coef[0] + coef[1] * (2.0 * t).cos() + coef[2] * (2.0 * t).sin() - v).powi(2))
        .sum();
    Some((coef[0], coef[1], coef[2], (sq / theta.len() as f64).sqrt()))
}

/// Sums adjacent phase differences outward from `phi_0 = 0`.
///
/// `diffs[i]` is `phi_{N+1} - phi_{N-1}` for the odd order `odd[i]`
/// (ascending, consecutive). Returns the even orders reached and their phases.
pub fn accumulate_phases(odd: &[i32], diffs: &[f64]) -> (Vec<i32>, Vec<f64>) {
    let mut orders = vec![0];
    let mut phases = vec![0.0];
    let lookup = |n: i32| odd.iter().position(|&k| k == n).map(|i| diffs[i]);
    let mut phi = 0.0;
    let mut n = 0;
    while let Some(d) = lookup(n + 1) {
        phi += d;
        n += 2;
        orders.push(n);
        phases.push(phi);
    }
    let (mut phi, mut n) = (0.0, 0);
    while let Some(d) = lookup(n - 1) {
        phi -= d;
        n -= 2;
        orders.insert(0, n);
        phases.insert(0, phi);
    }
    (orders, phases)
}

/// Retrieves even-sideband phases from the odd-sideband oscillations of `s`,
/// recorded with the weak fundamental `probe`.
pub fn rabbitt_retrieve(s: &Spectrogram, probe: &Coupling) -> Result<RabbittResult> {
    if probe.harmonic() != 1 {
        return Err(Error::InvalidCoupling("the probe must be a fundamental coupling".into()));
    }
    if probe.magnitude() >= MAX_PROBE {
        return Err(Error::InvalidCoupling(format!(
            "probe |g| = {} is not weak (must be < {MAX_PROBE})",
            probe.magnitude()
        )));
    }
    let theta = s.theta_grid();
    if theta.len() < 3 {
        return Err(Error::InvalidArgument(
            "cosine fit needs at least three phase samples".into(),
        ));
    }
    let w = *s.window();
    let odd: Vec<i32> = w
        .indices()
        .filter(|&n| n.rem_euclid(2) == 1 && w.contains(n - 1) && w.contains(n + 1))
        .collect();

    let floor = 1e-12 * s.populations().max();
    let fits: Vec<OddSidebandFit> = odd
        .par_iter()
        .map(|&n| {
            let row = w.position(n).unwrap();
            let y: Vec<f64> = (0..theta.len()).map(|c| s.populations()[(row, c)]).collect();
            let (a, b, c, rms) = fit_cosine(theta, &y).ok_or_else(|| {
                Error::Fit(format!("phase grid cannot resolve a cos 2theta term (order {n})"))
            })?;
            let amplitude = b.hypot(c);
            let phase = (-c).atan2(b);
            let scale = (y.iter().map(|v| v * v).sum::<f64>() / y.len() as f64).sqrt();
            let reliable = a > floor && amplitude / a >= MIN_CONTRAST;
            if !reliable {
                log::warn!("sideband {n}: modulation contrast too low, phase unreliable");
            }
            Ok(OddSidebandFit {
                order: n,
                offset: a,
                amplitude,
                phase,
                phase_diff: wrap_phase(PI - phase),
                relative_residual: if scale > 0.0 { rms / scale } else { 0.0 },
                reliable,
            })
        })
        .collect::<Result<_>>()?;

    let diffs: Vec<f64> = fits.iter().map(|f| f.phase_diff).collect();
    let (even_orders, raw) = accumulate_phases(&odd, &diffs);
    let cumulative_phases = raw.into_iter().map(wrap_phase).collect();

    let phase_reliable = even_orders
        .iter()
        .map(|&n| {
            fits.iter()
                .filter(|f| if n >= 0 { f.order > 0 && f.order < n } else { f.order < 0 && f.order > n })
                .all(|f| f.reliable)
        })
        .collect();

    let mean = s.mean_spectrum();
    let even_total: f64 = w
        .indices()
        .zip(&mean)
        .filter(|(n, _)| n.rem_euclid(2) == 0)
        .map(|(_, p)| p)
        .sum();
    let magnitudes = even_orders
        .iter()
        .map(|&n| {
            let p = w.position(n).map_or(0.0, |r| mean[r]);
            if even_total > 0.0 {
                (p / even_total).sqrt()
            } else {
                0.0
            }
        })
        .collect();

    Ok(RabbittResult {
        fits,
        even_orders,
        cumulative_phases,
        magnitudes,
        phase_reliable,
    })
}
