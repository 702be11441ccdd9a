//! Phase-space and time-domain views of a sideband density matrix.
use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::{chi_from_geometry, phase_jitter_ensemble, DriftGeometry, JITTER_NODES, SPEED_OF_LIGHT};
use crate::ladder::{CMatrix, Coupling, DensityMatrix};

/// Fundamental wavelength used for the time axis.
pub const WAVELENGTH: f64 = 800e-9;
/// One optical period at [`WAVELENGTH`], in seconds.
pub const OPTICAL_PERIOD: f64 = WAVELENGTH / SPEED_OF_LIGHT;

const FLAT_TOL: f64 = 1e-12;

fn omega() -> f64 {
    2.0 * PI / OPTICAL_PERIOD
}

/// `n_time` uniform samples of `[0, T)`.
pub fn period_grid(n_time: usize) -> Vec<f64> {
    (0..n_time)
        .map(|i| OPTICAL_PERIOD * i as f64 / n_time as f64)
        .collect()
}

/// Discrete Wigner function on the half-integer energy comb.
#[derive(Debug, Clone, PartialEq)]
pub struct WignerGrid {
    /// Half-integer sideband coordinates `j`.
    pub energies: Vec<f64>,
    /// Seconds within one optical period.
    pub times: Vec<f64>,
    /// `values[(row of j, column of t)]`.
    pub values: DMatrix<f64>,
    /// Largest discarded imaginary part.
    pub imag_residue: f64,
}

/// `W(j, t) = sum_m rho_{j+m, j-m} exp(-2 i m w t)`.
pub fn wigner_from_density(rho: &DensityMatrix, n_time: usize) -> Result<WignerGrid> {
    if n_time == 0 {
        return Err(Error::EmptyGrid);
    }
    let w = rho.window();
    let (lo, hi) = (w.n_min(), w.n_max());
    // 2j runs over every integer from 2 lo to 2 hi
    let twice: Vec<i32> = (2 * lo..=2 * hi).collect();
    let times = period_grid(n_time);
    let om = omega();

    let rows: Vec<(Vec<f64>, f64)> = twice
        .par_iter()
        .map(|&tj| {
            // k + l = 2j, k - l = 2m
            let terms: Vec<(i32, Complex64)> = (lo..=hi)
                .filter_map(|k| {
                    let l = tj - k;
                    (l >= lo && l <= hi).then(|| (k - l, rho.entry(k, l)))
                })
                .collect();
            let mut residue = 0.0_f64;
            let vals = times
                .iter()
                .map(|&t| {
                    let z: Complex64 = terms
                        .iter()
                        .map(|&(d, r)| r * Complex64::from_polar(1.0, -(d as f64) * om * t))
                        .sum();
                    residue = residue.max(z.im.abs());
                    z.re
                })
                .collect();
            (vals, residue)
        })
        .collect();

    let imag_residue = rows.iter().map(|r| r.1).fold(0.0, f64::max);
    let values = DMatrix::from_fn(twice.len(), n_time, |i, c| rows[i].0[c]);
    Ok(WignerGrid {
        energies: twice.iter().map(|&t| 0.5 * t as f64).collect(),
        times,
        values,
        imag_residue,
    })
}

/// Sums of `rho` along each diagonal `k - l = d`, for `d` in `-(n-1)..=(n-1)`.
fn diagonal_sums(entries: &CMatrix) -> Vec<Complex64> {
    let n = entries.nrows();
    let mut c = vec![Complex64::new(0.0, 0.0); 2 * n - 1];
    for i in 0..n {
        for j in 0..n {
            c[i + n - 1 - j] += entries[(i, j)];
        }
    }
    c
}

/// `n(t) = sum_{k,l} rho_kl exp(-i (k - l) w t)` at the given times (seconds).
pub fn temporal_density(rho: &DensityMatrix, times: &[f64]) -> Vec<f64> {
    let n = rho.dim();
    if n == 0 {
        return vec![0.0; times.len()];
    }
    let c = diagonal_sums(rho.entries());
    let om = omega();
    times
        .par_iter()
        .map(|&t| {
            let step = Complex64::from_polar(1.0, -om * t);
            // Horner in e^{-i w t}, starting from d = -(n-1)
            let mut acc = Complex64::new(0.0, 0.0);
            for z in c.iter().rev() {
                acc = acc * step + z;
            }
            (acc * step.powi(-(n as i32 - 1))).re
        })
        .collect()
}

/// Width and contrast of one period of a temporal density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseMetrics {
    /// `min(n) / max(n)`.
    pub baseline_fraction: f64,
    /// Circular rms width after baseline subtraction, seconds.
    pub rms_width: f64,
    /// Full width at half maximum of the main peak after baseline subtraction, seconds.
    pub fwhm: f64,
    pub peak_time: f64,
    /// Another lobe outside the main peak also exceeds half maximum.
    pub multi_peak: bool,
}

/// Metrics of `n`, sampled uniformly over one period of length `period` (seconds).
///
/// At least 4096 samples per period are recommended; fewer are accepted.
pub fn pulse_metrics(n: &[f64], period: f64) -> Result<PulseMetrics> {
    let len = n.len();
    if len < 3 {
        return Err(Error::EmptyGrid);
    }
    if !(period > 0.0) || !period.is_finite() {
        return Err(Error::InvalidArgument(format!("period must be positive, got {period}")));
    }
    if n.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("density contains non-finite samples".into()));
    }
    if len < 4096 {
        log::debug!("pulse metrics from only {len} samples per period");
    }
    let (imax, &max) = n
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty");
    let min = n.iter().copied().fold(f64::INFINITY, f64::min);
    if max - min < FLAT_TOL {
        return Err(Error::FlatDensity);
    }
    let baseline_fraction = if max > 0.0 { (min / max).clamp(0.0, 1.0) } else { 0.0 };
    let m: Vec<f64> = n.iter().map(|v| v - min).collect();
    let dt = period / len as f64;

    // circular moments
    let dphi = 2.0 * PI / len as f64;
    let (mut re, mut im, mut total) = (0.0, 0.0, 0.0);
    for (i, &v) in m.iter().enumerate() {
        let (s, c) = (dphi * i as f64).sin_cos();
        re += v * c;
        im += v * s;
        total += v;
    }
    let r = (re.hypot(im) / total).min(1.0);
    let rms_width = (-2.0 * r.ln()).sqrt() * period / (2.0 * PI);

    // half-maximum crossings walking out from the peak
    let half = 0.5 * (max - min);
    let at = |k: isize| m[k.rem_euclid(len as isize) as usize];
    let p = imax as isize;
    let mut right = p;
    while at(right + 1) >= half && right - p < len as isize {
        right += 1;
    }
    let mut left = p;
    while at(left - 1) >= half && p - left < len as isize {
        left -= 1;
    }
    let fwhm = if right - left + 1 >= len as isize {
        period
    } else {
        let cross = |inside: isize, outside: isize| {
            let (a, b) = (at(inside), at(outside));
            inside as f64 + (outside - inside) as f64 * (a - half) / (a - b)
        };
        (cross(right, right + 1) - cross(left, left - 1)) * dt
    };
    let multi_peak = right - left + 1 < len as isize
        && (right + 1..left + len as isize).any(|k| at(k) >= half);

    Ok(PulseMetrics {
        baseline_fraction,
        rms_width,
        fwhm,
        peak_time: imax as f64 * dt,
        multi_peak,
    })
}

/// Distance and overlap between two density matrices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateDistance {
    pub frobenius: f64,
    /// Uhlmann fidelity `(tr sqrt(sqrt(a) b sqrt(a)))^2`.
    pub fidelity: f64,
    pub purity_a: f64,
    pub purity_b: f64,
}

const PURE_TOL: f64 = 1e-10;

/// Eigenvalues below this fraction of the largest are treated as zero, so
/// rank-deficient inputs do not pick up `sqrt(roundoff)` contributions.
const RANK_TOL: f64 = 1e-13;

fn psd_sqrt(m: &CMatrix) -> CMatrix {
    let h = (m + m.adjoint()).scale(0.5);
    let eig = h.symmetric_eigen();
    let cut = RANK_TOL * eig.eigenvalues.amax();
    let vals = eig
        .eigenvalues
        .map(|v| Complex64::new(if v > cut { v.sqrt() } else { 0.0 }, 0.0));
    &eig.eigenvectors * CMatrix::from_diagonal(&vals) * eig.eigenvectors.adjoint()
}

fn leading_vector(m: &CMatrix) -> nalgebra::DVector<Complex64> {
    let eig = m.clone().symmetric_eigen();
    let k = eig.eigenvalues.imax();
    eig.eigenvectors.column(k).into_owned()
}

pub fn state_distance(a: &DensityMatrix, b: &DensityMatrix) -> Result<StateDistance> {
    let hull = a.window().hull(b.window()).with_stride(1)?;
    let ea = a.with_window(a.window().with_stride(1)?)?.embed(&hull)?.into_entries();
    let eb = b.with_window(b.window().with_stride(1)?)?.embed(&hull)?.into_entries();
    let (purity_a, purity_b) = (a.purity(), b.purity());

    let fidelity = if purity_a >= 1.0 - PURE_TOL || purity_b >= 1.0 - PURE_TOL {
        let (pure, other) = if purity_a >= purity_b { (&ea, &eb) } else { (&eb, &ea) };
        let psi = leading_vector(pure);
        (psi.adjoint() * other * &psi)[(0, 0)].re
    } else {
        // tr sqrt(sqrt(a) b sqrt(a)) is the trace norm of sqrt(a) sqrt(b)
        let prod = psd_sqrt(&ea) * psd_sqrt(&eb);
        let tr: f64 = prod.singular_values().iter().sum();
        tr * tr
    };
    Ok(StateDistance {
        frobenius: a.frobenius_distance(b),
        fidelity: fidelity.clamp(0.0, 1.0),
        purity_a,
        purity_b,
    })
}

/// Prepared state dispersed over a drift and blurred by timing jitter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttosecondConfig {
    pub g_pump: f64,
    pub harmonic: u8,
    /// Drift length in metres (800 nm light, 120 keV electrons).
    pub distance: f64,
    /// Rms timing jitter in seconds.
    pub jitter: f64,
    pub samples: usize,
}

impl Default for AttosecondConfig {
    fn default() -> Self {
        AttosecondConfig {
            g_pump: 3.95,
            harmonic: 1,
            distance: 1.5e-3,
            jitter: 80e-18,
            samples: 4096,
        }
    }
}

impl AttosecondConfig {
    /// Jitter as a phase of the harmonic that drives the modulation.
    pub fn jitter_phase(&self) -> f64 {
        omega() * self.jitter * self.harmonic as f64
    }

    pub fn ensemble(&self) -> Result<DensityMatrix> {
        let chi = chi_from_geometry(&DriftGeometry::standard(self.distance))?;
        let pump = Coupling::new(self.g_pump, 0.0, self.harmonic)?;
        phase_jitter_ensemble(&pump, chi, self.jitter_phase(), JITTER_NODES)
    }
}

/// Temporal density at the end of the drift and its metrics.
pub fn attosecond_pulse(config: &AttosecondConfig) -> Result<(Vec<f64>, PulseMetrics)> {
    if config.samples < 3 {
        return Err(Error::EmptyGrid);
    }
    let rho = config.ensemble()?;
    let n = temporal_density(&rho, &period_grid(config.samples));
    let m = pulse_metrics(&n, OPTICAL_PERIOD)?;
    Ok((n, m))
}

/// Drift length minimizing the rms width, searched over `[lo, hi]` (metres).
///
/// A coarse scan of `points` distances locates the best bracket, which is
/// then refined by golden-section search. Returns `(distance, rms)` plus the scan.
pub fn temporal_focus(
    config: &AttosecondConfig,
    lo: f64,
    hi: f64,
    points: usize,
) -> Result<((f64, f64), Vec<(f64, f64)>)> {
    if !(lo >= 0.0 && hi > lo) || points < 3 {
        return Err(Error::InvalidArgument("focus search needs 0 <= lo < hi and >= 3 points".into()));
    }
    let rms = |d: f64| -> Result<f64> {
        let cfg = AttosecondConfig { distance: d, ..*config };
        Ok(attosecond_pulse(&cfg)?.1.rms_width)
    };
    let scan: Vec<(f64, f64)> = (0..points)
        .into_par_iter()
        .map(|i| {
            let d = lo + (hi - lo) * i as f64 / (points - 1) as f64;
            rms(d).map(|r| (d, r))
        })
        .collect::<Result<_>>()?;
    let best = (0..points)
        .min_by(|&a, &b| scan[a].1.total_cmp(&scan[b].1))
        .expect("non-empty scan");
    let mut a = scan[best.saturating_sub(1)].0;
    let mut b = scan[(best + 1).min(points - 1)].0;
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (rms(c)?, rms(d)?);
    while b - a > 1e-7 {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = rms(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = rms(d)?;
        }
    }
    let opt = if fc <= fd { (c, fc) } else { (d, fd) };
    let opt = if scan[best].1 < opt.1 { scan[best] } else { opt };
    Ok((opt, scan))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::prepare_pure;
    use crate::ladder::{SidebandState, SidebandWindow};

    fn cos_density(len: usize, shift: usize) -> Vec<f64> {
        (0..len)
            .map(|i| 1.0 + (2.0 * PI * (i + len - shift) as f64 / len as f64).cos())
            .collect()
    }

    #[test]
    fn raised_cosine_width() {
        let m = pulse_metrics(&cos_density(4096, 0), OPTICAL_PERIOD).unwrap();
        assert!((m.fwhm - 0.5 * OPTICAL_PERIOD).abs() < 1e-6 * OPTICAL_PERIOD);
        assert!((m.fwhm - 1.334e-15).abs() < 1e-18);
        assert!(m.baseline_fraction.abs() < 1e-12);
        assert_eq!(m.peak_time, 0.0);
        assert!(!m.multi_peak);
    }

    #[test]
    fn flat_density_is_an_error() {
        assert!(matches!(pulse_metrics(&[1.0; 64], OPTICAL_PERIOD), Err(Error::FlatDensity)));
        assert!(pulse_metrics(&[], OPTICAL_PERIOD).is_err());
    }

    #[test]
    fn two_lobes_are_flagged() {
        let n: Vec<f64> = (0..2048)
            .map(|i| {
                let t = 2.0 * PI * i as f64 / 2048.0;
                1.0 + t.cos() + 2.0 * (2.0 * t).cos()
            })
            .collect();
        let m = pulse_metrics(&n, OPTICAL_PERIOD).unwrap();
        assert!(m.multi_peak);
    }

    #[test]
    fn vacuum_density_is_flat_one() {
        let rho = SidebandState::zero_loss(SidebandWindow::symmetric(3, 1).unwrap()).to_density();
        for v in temporal_density(&rho, &period_grid(50)) {
            assert!((v - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn density_matches_direct_double_sum() {
        let rho = prepare_pure(&Coupling::new(1.3, 0.4, 1).unwrap())
            .unwrap()
            .dispersed(0.2)
            .to_density();
        let times = period_grid(37);
        let fast = temporal_density(&rho, &times);
        let w = rho.window();
        for (t, f) in times.iter().zip(&fast) {
            let mut z = Complex64::new(0.0, 0.0);
            for k in w.indices() {
                for l in w.indices() {
                    z += rho.entry(k, l) * Complex64::from_polar(1.0, -((k - l) as f64) * omega() * t);
                }
            }
            assert!((z.re - f).abs() < 1e-10);
        }
    }

    #[test]
    fn wigner_of_vacuum() {
        let rho = SidebandState::zero_loss(SidebandWindow::symmetric(1, 1).unwrap()).to_density();
        let w = wigner_from_density(&rho, 8).unwrap();
        assert_eq!(w.energies, vec![-1.0, -0.5, 0.0, 0.5, 1.0]);
        for c in 0..8 {
            assert!((w.values[(2, c)] - 1.0).abs() < 1e-15);
            assert_eq!(w.values[(0, c)], 0.0);
        }
    }

    #[test]
    fn fidelity_of_orthogonal_and_equal_states() {
        let w = SidebandWindow::symmetric(2, 1).unwrap();
        let a = SidebandState::zero_loss(w).to_density();
        let mut amps = vec![Complex64::new(0.0, 0.0); 5];
        amps[3] = Complex64::new(1.0, 0.0);
        let b = SidebandState::new(w, amps).unwrap().to_density();
        let d = state_distance(&a, &b).unwrap();
        assert!(d.fidelity.abs() < 1e-14);
        assert!((d.frobenius - 2f64.sqrt()).abs() < 1e-14);
        let same = state_distance(&a, &a).unwrap();
        assert!((same.fidelity - 1.0).abs() < 1e-12 && same.frobenius == 0.0);
        let mixed = DensityMatrix::maximally_mixed(w);
        let d = state_distance(&mixed, &mixed).unwrap();
        assert!((d.fidelity - 1.0).abs() < 1e-10);
        assert!((d.purity_a - 0.2).abs() < 1e-14);
    }

    #[test]
    fn jitter_phase_of_default_config() {
        let c = AttosecondConfig::default();
        assert!((c.jitter_phase() - 0.1885).abs() < 1e-3);
    }
}
