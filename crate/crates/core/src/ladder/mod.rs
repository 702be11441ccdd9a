//! Sideband ladder: index bookkeeping, electron states on the photon-sideband
//! comb and the phase-modulation unitary.
//!
//! Sideband `0` is the zero-loss line; positive indices are energy gain. A
//! coupling of harmonic `h` with strength `|g|` and phase `phi` multiplies the
//! wavefunction by `exp(2i|g| sin(h w t + phi))`, which in the sideband basis
//! is the Bessel ladder `<N|U|M> = exp(i s (theta + phi)) J_s(2|g|)` with
//! `N - M = s h`.

mod bessel;
mod density;

pub use bessel::{bessel_j, bessel_j_sequence};
pub use density::{apply_unitary, DensityMatrix};

use std::ops::RangeInclusive;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;

/// Bessel tail weight `sum_{|s| > S} J_s^2` left outside the ladder reach.
const TAIL_WEIGHT: f64 = 1e-20;

/// Extra rungs added to `ceil(2|g|)` before the tail criterion is checked.
const MIN_PADDING: usize = 8;

/// Contiguous range of sideband indices containing the zero-loss line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "WindowRepr", into = "WindowRepr")]
pub struct SidebandWindow {
    n_min: i32,
    n_max: i32,
    support_stride: u8,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WindowRepr {
    n_min: i32,
    n_max: i32,
    #[serde(default = "default_stride")]
    support_stride: u8,
}

fn default_stride() -> u8 {
    1
}

impl TryFrom<WindowRepr> for SidebandWindow {
    type Error = Error;
    fn try_from(r: WindowRepr) -> Result<Self> {
        SidebandWindow::new(r.n_min, r.n_max, r.support_stride)
    }
}

impl From<SidebandWindow> for WindowRepr {
    fn from(w: SidebandWindow) -> Self {
        WindowRepr {
            n_min: w.n_min,
            n_max: w.n_max,
            support_stride: w.support_stride,
        }
    }
}

impl SidebandWindow {
    pub fn new(n_min: i32, n_max: i32, support_stride: u8) -> Result<Self> {
        if n_min > 0 || n_max < 0 {
            return Err(Error::InvalidWindow(format!(
                "[{n_min}, {n_max}] does not contain sideband 0"
            )));
        }
        if !(1..=2).contains(&support_stride) {
            return Err(Error::InvalidWindow(format!(
                "support stride must be 1 or 2, got {support_stride}"
            )));
        }
        Ok(SidebandWindow {
            n_min,
            n_max,
            support_stride,
        })
    }

    /// `[-half_width, half_width]`.
    pub fn symmetric(half_width: u32, support_stride: u8) -> Result<Self> {
        let h = half_width as i32;
        Self::new(-h, h, support_stride)
    }

    pub fn n_min(&self) -> i32 {
        self.n_min
    }

    pub fn n_max(&self) -> i32 {
        self.n_max
    }

    pub fn support_stride(&self) -> u8 {
        self.support_stride
    }

    pub fn len(&self) -> usize {
        (self.n_max - self.n_min + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn indices(&self) -> RangeInclusive<i32> {
        self.n_min..=self.n_max
    }

    pub fn contains(&self, n: i32) -> bool {
        (self.n_min..=self.n_max).contains(&n)
    }

    /// Row/column position of sideband `n`.
    pub fn position(&self, n: i32) -> Option<usize> {
        self.contains(n).then(|| (n - self.n_min) as usize)
    }

    pub fn index_at(&self, position: usize) -> i32 {
        self.n_min + position as i32
    }

    /// Whether sideband `n` lies on the support lattice.
    pub fn is_supported(&self, n: i32) -> bool {
        n.rem_euclid(self.support_stride as i32) == 0
    }

    /// Occupiable sideband indices in ascending order.
    pub fn support(&self) -> Vec<i32> {
        self.indices().filter(|&n| self.is_supported(n)).collect()
    }

    pub fn padded(&self, pad: u32) -> Self {
        SidebandWindow {
            n_min: self.n_min - pad as i32,
            n_max: self.n_max + pad as i32,
            support_stride: self.support_stride,
        }
    }

    pub fn with_stride(&self, support_stride: u8) -> Result<Self> {
        Self::new(self.n_min, self.n_max, support_stride)
    }

    /// Smallest window containing both; the support lattice is the coarser
    /// one only when both windows agree on it.
    pub fn hull(&self, other: &SidebandWindow) -> Self {
        SidebandWindow {
            n_min: self.n_min.min(other.n_min),
            n_max: self.n_max.max(other.n_max),
            support_stride: if self.support_stride == other.support_stride {
                self.support_stride
            } else {
                1
            },
        }
    }

    pub fn contains_window(&self, other: &SidebandWindow) -> bool {
        self.n_min <= other.n_min && self.n_max >= other.n_max
    }
}

/// Complex electron-light coupling constant of one interaction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CouplingRepr", into = "CouplingRepr")]
pub struct Coupling {
    magnitude: f64,
    phase: f64,
    harmonic: u8,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CouplingRepr {
    magnitude: f64,
    #[serde(default)]
    phase: f64,
    #[serde(default = "default_stride")]
    harmonic: u8,
}

impl TryFrom<CouplingRepr> for Coupling {
    type Error = Error;
    fn try_from(r: CouplingRepr) -> Result<Self> {
        Coupling::new(r.magnitude, r.phase, r.harmonic)
    }
}

impl From<Coupling> for CouplingRepr {
    fn from(g: Coupling) -> Self {
        CouplingRepr {
            magnitude: g.magnitude,
            phase: g.phase,
            harmonic: g.harmonic,
        }
    }
}

impl Coupling {
    pub fn new(magnitude: f64, phase: f64, harmonic: u8) -> Result<Self> {
        if !(magnitude.is_finite() && magnitude >= 0.0) {
            return Err(Error::InvalidCoupling(format!(
                "magnitude must be finite and non-negative, got {magnitude}"
            )));
        }
        if !phase.is_finite() {
            return Err(Error::InvalidCoupling("phase must be finite".into()));
        }
        if !(1..=2).contains(&harmonic) {
            return Err(Error::InvalidCoupling(format!(
                "harmonic must be 1 or 2, got {harmonic}"
            )));
        }
        Ok(Coupling {
            magnitude,
            phase,
            harmonic,
        })
    }

    /// Fundamental-frequency coupling with zero phase.
    pub fn fundamental(magnitude: f64) -> Result<Self> {
        Self::new(magnitude, 0.0, 1)
    }

    /// Second-harmonic coupling with zero phase.
    pub fn second_harmonic(magnitude: f64) -> Result<Self> {
        Self::new(magnitude, 0.0, 2)
    }

    pub fn magnitude(&self) -> f64 {
        self.magnitude
    }

    pub fn phase(&self) -> f64 {
        self.phase
    }

    pub fn harmonic(&self) -> u8 {
        self.harmonic
    }

    pub fn with_phase(&self, phase: f64) -> Self {
        Coupling { phase, ..*self }
    }

    pub fn with_magnitude(&self, magnitude: f64) -> Result<Self> {
        Self::new(magnitude, self.phase, self.harmonic)
    }

    /// Bessel argument `2|g|`.
    pub fn bessel_argument(&self) -> f64 {
        2.0 * self.magnitude
    }

    /// Number of photon-exchange steps kept on each side of a rung.
    pub fn reach_steps(&self) -> usize {
        if self.magnitude == 0.0 {
            return 0;
        }
        let x = self.bessel_argument();
        let floor = x.ceil() as usize + MIN_PADDING;
        let top = floor + 40 + (6.0 * x.cbrt()).ceil() as usize;
        let seq = bessel_j_sequence(top, x);
        let mut tail = 0.0;
        let mut steps = top;
        for s in (floor + 1..=top).rev() {
            tail += 2.0 * seq[s] * seq[s];
            if tail > TAIL_WEIGHT {
                break;
            }
            steps = s - 1;
        }
        steps.max(floor)
    }

    /// Sideband reach of this coupling in units of the fundamental photon.
    pub fn reach(&self) -> u32 {
        (self.reach_steps() * self.harmonic as usize) as u32
    }

    /// Ladder coefficients `exp(i s (theta + phase)) J_s(2|g|)` for
    /// `s = -steps..=steps`; entry `steps + s` holds step `s`.
    pub fn kernel(&self, theta: f64) -> Vec<Complex64> {
        let steps = self.reach_steps();
        let seq = bessel_j_sequence(steps, self.bessel_argument());
        let phi = theta + self.phase;
        let mut out = vec![Complex64::new(0.0, 0.0); 2 * steps + 1];
        for s in 0..=steps {
            let j = seq[s];
            let up = Complex64::from_polar(1.0, s as f64 * phi) * j;
            out[steps + s] = up;
            if s > 0 {
                let sign = if s % 2 == 0 { 1.0 } else { -1.0 };
                out[steps - s] = Complex64::from_polar(1.0, -(s as f64) * phi) * (sign * j);
            }
        }
        out
    }
}

/// Phase-modulation unitary on `window`.
///
/// The window must extend at least `g.reach()` rungs on both sides of the
/// zero-loss line. Columns whose ladder reach stays inside the window are
/// orthonormal to within the Bessel tail weight.
pub fn coupling_unitary(g: &Coupling, theta: f64, window: &SidebandWindow) -> Result<CMatrix> {
    let reach = g.reach() as i32;
    if window.n_max() < reach || window.n_min() > -reach {
        return Err(Error::WindowTooSmall {
            n_min: window.n_min(),
            n_max: window.n_max(),
            reach,
        });
    }
    Ok(unitary_unchecked(g, theta, window))
}

pub(crate) fn unitary_unchecked(g: &Coupling, theta: f64, window: &SidebandWindow) -> CMatrix {
    let kernel = g.kernel(theta);
    let steps = g.reach_steps() as i32;
    let h = g.harmonic() as i32;
    let len = window.len();
    let mut u = CMatrix::zeros(len, len);
    for col in 0..len {
        let m = window.index_at(col);
        for s in -steps..=steps {
            if let Some(row) = window.position(m + s * h) {
                u[(row, col)] = kernel[(s + steps) as usize];
            }
        }
    }
    u
}

/// Pure electron state on the sideband ladder.
#[derive(Debug, Clone, PartialEq)]
pub struct SidebandState {
    window: SidebandWindow,
    amplitudes: Vec<Complex64>,
}

impl SidebandState {
    /// Unmodulated electron, `|0>`.
    pub fn zero_loss(window: SidebandWindow) -> Self {
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); window.len()];
        amplitudes[window.position(0).unwrap()] = Complex64::new(1.0, 0.0);
        SidebandState { window, amplitudes }
    }

    /// Validates length and normalization (within 1e-10).
    pub fn new(window: SidebandWindow, amplitudes: Vec<Complex64>) -> Result<Self> {
        if amplitudes.len() != window.len() {
            return Err(Error::DimensionMismatch {
                expected: window.len(),
                actual: amplitudes.len(),
            });
        }
        let state = SidebandState { window, amplitudes };
        let norm = state.norm_sqr();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidState(format!("norm^2 = {norm}, expected 1")));
        }
        Ok(state)
    }

    pub(crate) fn from_raw(window: SidebandWindow, amplitudes: Vec<Complex64>) -> Self {
        debug_assert_eq!(window.len(), amplitudes.len());
        SidebandState { window, amplitudes }
    }

    pub fn window(&self) -> &SidebandWindow {
        &self.window
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    /// `c_N`, zero outside the window.
    pub fn amplitude(&self, n: i32) -> Complex64 {
        self.window
            .position(n)
            .map_or(Complex64::new(0.0, 0.0), |p| self.amplitudes[p])
    }

    pub fn populations(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|c| c.norm_sqr()).collect()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|c| c.norm_sqr()).sum()
    }

    /// `sum_N N |c_N|^2`.
    pub fn mean_sideband(&self) -> f64 {
        self.window
            .indices()
            .zip(&self.amplitudes)
            .map(|(n, c)| n as f64 * c.norm_sqr())
            .sum()
    }

    /// Copies the state into a larger window.
    pub fn embed(&self, window: &SidebandWindow) -> Result<Self> {
        if !window.contains_window(&self.window) {
            return Err(Error::InvalidWindow(format!(
                "[{}, {}] does not contain [{}, {}]",
                window.n_min(),
                window.n_max(),
                self.window.n_min(),
                self.window.n_max()
            )));
        }
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); window.len()];
        let offset = (self.window.n_min() - window.n_min()) as usize;
        amplitudes[offset..offset + self.amplitudes.len()].copy_from_slice(&self.amplitudes);
        Ok(SidebandState {
            window: *window,
            amplitudes,
        })
    }

    /// Restriction to `window`, dropping amplitudes outside it (no renormalization).
    pub fn restrict(&self, window: &SidebandWindow) -> Self {
        let amplitudes = window.indices().map(|n| self.amplitude(n)).collect();
        SidebandState {
            window: *window,
            amplitudes,
        }
    }

    /// Quadratic spectral phase `exp(-i chi N^2)`.
    pub fn dispersed(&self, chi: f64) -> Self {
        let amplitudes = self
            .window
            .indices()
            .zip(&self.amplitudes)
            .map(|(n, c)| c * Complex64::from_polar(1.0, -chi * (n as f64) * (n as f64)))
            .collect();
        SidebandState {
            window: self.window,
            amplitudes,
        }
    }

    /// Relative-phase offset `exp(i N dtheta)`, a rigid time shift by `dtheta / w`.
    pub fn phase_shifted(&self, dtheta: f64) -> Self {
        let amplitudes = self
            .window
            .indices()
            .zip(&self.amplitudes)
            .map(|(n, c)| c * Complex64::from_polar(1.0, n as f64 * dtheta))
            .collect();
        SidebandState {
            window: self.window,
            amplitudes,
        }
    }

    pub fn to_density(&self) -> DensityMatrix {
        DensityMatrix::pure(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn max_unitarity_defect(g: &Coupling, theta: f64, core: &SidebandWindow) -> f64 {
        let window = core.padded(g.reach());
        let u = coupling_unitary(g, theta, &window).unwrap();
        let gram = u.adjoint() * &u;
        let mut worst: f64 = 0.0;
        for a in core.indices() {
            for b in core.indices() {
                let (i, j) = (window.position(a).unwrap(), window.position(b).unwrap());
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((gram[(i, j)] - target).norm());
            }
        }
        worst
    }

    #[test]
    fn window_rejects_missing_zero_and_bad_stride() {
        assert!(SidebandWindow::new(1, 4, 1).is_err());
        assert!(SidebandWindow::new(-4, -1, 1).is_err());
        assert!(SidebandWindow::new(-4, 4, 3).is_err());
        let w = SidebandWindow::new(-3, 4, 2).unwrap();
        assert_eq!(w.support(), vec![-2, 0, 2, 4]);
        assert_eq!(w.position(-3), Some(0));
        assert_eq!(w.len(), 8);
    }

    #[test]
    fn coupling_validation() {
        assert!(Coupling::new(-0.1, 0.0, 1).is_err());
        assert!(Coupling::new(1.0, 0.0, 3).is_err());
        assert!(Coupling::new(f64::NAN, 0.0, 1).is_err());
        assert_eq!(Coupling::fundamental(0.0).unwrap().reach(), 0);
    }

    #[test]
    fn zero_coupling_is_identity() {
        let g = Coupling::fundamental(0.0).unwrap();
        let w = SidebandWindow::symmetric(3, 1).unwrap();
        let u = coupling_unitary(&g, 1.3, &w).unwrap();
        assert!((u - CMatrix::identity(7, 7)).norm() < 1e-15);
    }

    #[test]
    fn first_rung_entry() {
        let g = Coupling::fundamental(1.0).unwrap();
        let w = SidebandWindow::symmetric(g.reach(), 1).unwrap();
        let u = coupling_unitary(&g, 0.0, &w).unwrap();
        let e = u[(w.position(1).unwrap(), w.position(0).unwrap())];
        assert!((e.re - 0.576_724_807_756_873_4).abs() < 1e-12);
        assert!(e.im.abs() < 1e-15);
    }

    #[test]
    fn small_window_rejected() {
        let g = Coupling::fundamental(2.0).unwrap();
        let w = SidebandWindow::symmetric(5, 1).unwrap();
        assert!(matches!(
            coupling_unitary(&g, 0.0, &w),
            Err(Error::WindowTooSmall { .. })
        ));
    }

    #[test]
    fn unitarity_over_coupling_range() {
        let core = SidebandWindow::symmetric(6, 1).unwrap();
        for h in 1..=2u8 {
            for i in 0..=10 {
                let g = Coupling::new(0.5 * i as f64, 0.3 * i as f64, h).unwrap();
                for k in 0..4 {
                    let theta = 2.0 * PI * k as f64 / 4.0;
                    let d = max_unitarity_defect(&g, theta, &core);
                    assert!(d <= 1e-10, "h={h} g={} defect={d}", g.magnitude());
                }
            }
        }
    }

    #[test]
    fn harmonic_two_skips_odd_rungs() {
        let g = Coupling::second_harmonic(1.0).unwrap();
        let w = SidebandWindow::symmetric(g.reach(), 1).unwrap();
        let u = coupling_unitary(&g, 0.0, &w).unwrap();
        let c0 = w.position(0).unwrap();
        assert_eq!(u[(w.position(1).unwrap(), c0)].norm(), 0.0);
        assert!((u[(w.position(2).unwrap(), c0)].re - bessel_j(1, 2.0)).abs() < 1e-14);
    }

    #[test]
    fn state_embedding_and_dispersion() {
        let w = SidebandWindow::symmetric(1, 1).unwrap();
        let s = SidebandState::new(
            w,
            vec![
                Complex64::new(0.6, 0.0),
                Complex64::new(0.0, 0.0),
                Complex64::new(0.0, 0.8),
            ],
        )
        .unwrap();
        let big = s.embed(&w.padded(2)).unwrap();
        assert_eq!(big.amplitude(1), Complex64::new(0.0, 0.8));
        assert_eq!(big.amplitude(3), Complex64::new(0.0, 0.0));
        let d = s.dispersed(0.7);
        for (a, b) in s.populations().iter().zip(d.populations()) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(SidebandState::new(w, vec![Complex64::new(1.0, 0.0); 3]).is_err());
    }
}
