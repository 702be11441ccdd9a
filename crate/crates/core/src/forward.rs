//! State preparation and measurement simulation.
//!
//! Covers single- and two-color phase modulation, free-space dispersion,
//! synthesis of phase-resolved sideband spectrograms, Poisson counting
//! noise and phase-jitter ensembles.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ladder::{CMatrix, Coupling, DensityMatrix, SidebandState, SidebandWindow};

pub const HBAR: f64 = 1.054_571_817e-34;
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;
pub const ELECTRON_REST_ENERGY_EV: f64 = 510_998.95;

/// Default Gauss-Hermite order for jitter averages.
pub const JITTER_NODES: usize = 21;

/// Sideband populations versus relative phase.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    populations: DMatrix<f64>,
    theta_grid: Vec<f64>,
    probe: Coupling,
    window: SidebandWindow,
    counts_per_spectrum: Option<f64>,
}

impl Spectrogram {
    /// Rows follow `window`, columns follow `theta_grid`.
    pub fn new(
        populations: DMatrix<f64>,
        theta_grid: Vec<f64>,
        probe: Coupling,
        window: SidebandWindow,
        counts_per_spectrum: Option<f64>,
    ) -> Result<Self> {
        validate_theta_grid(&theta_grid)?;
        if populations.nrows() != window.len() {
            return Err(Error::DimensionMismatch {
                expected: window.len(),
                actual: populations.nrows(),
            });
        }
        if populations.ncols() != theta_grid.len() {
            return Err(Error::DimensionMismatch {
                expected: theta_grid.len(),
                actual: populations.ncols(),
            });
        }
        if let Some(bad) = populations.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "spectrogram populations must be finite and non-negative, found {bad}"
            )));
        }
        if let Some(c) = counts_per_spectrum {
            if !(c > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "counts per spectrum must be positive, got {c}"
                )));
            }
        }
        Ok(Spectrogram {
            populations,
            theta_grid,
            probe,
            window,
            counts_per_spectrum,
        })
    }

    pub fn populations(&self) -> &DMatrix<f64> {
        &self.populations
    }

    pub fn theta_grid(&self) -> &[f64] {
        &self.theta_grid
    }

    pub fn probe(&self) -> &Coupling {
        &self.probe
    }

    pub fn window(&self) -> &SidebandWindow {
        &self.window
    }

    pub fn counts_per_spectrum(&self) -> Option<f64> {
        self.counts_per_spectrum
    }

    pub fn with_probe(mut self, probe: Coupling) -> Self {
        self.probe = probe;
        self
    }

    /// Population of sideband `l` in column `col`, zero outside the window.
    pub fn population(&self, l: i32, col: usize) -> f64 {
        self.window
            .position(l)
            .map_or(0.0, |r| self.populations[(r, col)])
    }

    /// Column-major stacking `(theta, l)`, matching the forward operator rows.
    pub fn stacked(&self) -> Vec<f64> {
        self.populations.as_slice().to_vec()
    }

    /// `||p||` over all samples.
    pub fn norm(&self) -> f64 {
        self.populations.norm()
    }

    pub fn column_sums(&self) -> Vec<f64> {
        self.populations.column_iter().map(|c| c.sum()).collect()
    }

    /// Theta-averaged spectrum.
    pub fn mean_spectrum(&self) -> Vec<f64> {
        let n = self.theta_grid.len() as f64;
        self.populations.row_iter().map(|r| r.sum() / n).collect()
    }
}

pub(crate) fn validate_theta_grid(theta: &[f64]) -> Result<()> {
    if theta.is_empty() {
        return Err(Error::EmptyGrid);
    }
    if theta.iter().any(|t| !t.is_finite()) {
        return Err(Error::InvalidArgument("phase grid contains non-finite values".into()));
    }
    if theta.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument(
            "phase grid must be strictly increasing".into(),
        ));
    }
    Ok(())
}

/// `count` equally spaced phases in `[0, period)`.
pub fn uniform_theta_grid(count: usize, period: f64) -> Vec<f64> {
    (0..count)
        .map(|i| period * i as f64 / count as f64)
        .collect()
}

/// Electron-optical geometry of a free drift between two interaction planes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftGeometry {
    /// Propagation length in metres.
    pub distance: f64,
    /// Fundamental optical wavelength in metres.
    pub wavelength: f64,
    /// Electron kinetic energy in eV.
    pub kinetic_energy: f64,
    #[serde(default = "default_rest_energy")]
    pub rest_energy: f64,
}

fn default_rest_energy() -> f64 {
    ELECTRON_REST_ENERGY_EV
}

impl DriftGeometry {
    /// 800 nm light and 120 keV electrons.
    pub fn standard(distance: f64) -> Self {
        DriftGeometry {
            distance,
            wavelength: 800e-9,
            kinetic_energy: 120e3,
            rest_energy: ELECTRON_REST_ENERGY_EV,
        }
    }
}

/// Quadratic spectral phase applied between planes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DispersionParams {
    Chi(f64),
    Geometry(DriftGeometry),
}

impl DispersionParams {
    pub fn chi(&self) -> Result<f64> {
        match self {
            DispersionParams::Chi(chi) if chi.is_finite() => Ok(*chi),
            DispersionParams::Chi(chi) => Err(Error::InvalidArgument(format!(
                "dispersion coefficient must be finite, got {chi}"
            ))),
            DispersionParams::Geometry(g) => chi_from_geometry(g),
        }
    }
}

/// Quadratic phase per squared sideband index accrued over a free drift.
///
/// Expanding the relativistic wavenumber to second order in the energy
/// offset `N hbar w` gives `d^2k/dE^2 = -1 / (hbar m gamma^3 v^3)`, hence
/// `chi = d hbar w^2 / (2 m gamma^3 v^3)`.
pub fn chi_from_geometry(geom: &DriftGeometry) -> Result<f64> {
    if !(geom.kinetic_energy > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "kinetic energy must be positive, got {}",
            geom.kinetic_energy
        )));
    }
    if !(geom.distance >= 0.0) || !geom.distance.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "propagation distance must be non-negative, got {}",
            geom.distance
        )));
    }
    if !(geom.wavelength > 0.0 && geom.rest_energy > 0.0) {
        return Err(Error::InvalidArgument(
            "wavelength and rest energy must be positive".into(),
        ));
    }
    let gamma = 1.0 + geom.kinetic_energy / geom.rest_energy;
    let beta = (1.0 - 1.0 / (gamma * gamma)).sqrt();
    let v = beta * SPEED_OF_LIGHT;
    let mass = geom.rest_energy * ELEMENTARY_CHARGE / (SPEED_OF_LIGHT * SPEED_OF_LIGHT);
    let omega = 2.0 * std::f64::consts::PI * SPEED_OF_LIGHT / geom.wavelength;
    Ok(geom.distance * HBAR * omega * omega / (2.0 * mass * gamma.powi(3) * v.powi(3)))
}

/// Inverse of [`chi_from_geometry`] in the propagation distance.
pub fn distance_for_chi(chi: f64, template: &DriftGeometry) -> Result<f64> {
    let per_metre = chi_from_geometry(&DriftGeometry {
        distance: 1.0,
        ..*template
    })?;
    Ok(chi / per_metre)
}

/// Applies one phase modulation to a pure state.
///
/// The output lives on the input window padded by the coupling reach.
pub fn modulate(state: &SidebandState, g: &Coupling, theta: f64) -> Result<SidebandState> {
    if g.magnitude() == 0.0 {
        return Ok(state.clone());
    }
    let in_window = state.window();
    let stride = if g.harmonic() == 2 && in_window.support_stride() == 2 {
        2
    } else {
        1
    };
    let window = in_window.padded(g.reach()).with_stride(stride)?;
    let kernel = g.kernel(theta);
    let steps = g.reach_steps() as i32;
    let h = g.harmonic() as i32;
    let mut out = vec![Complex64::new(0.0, 0.0); window.len()];
    for (m, c) in in_window.indices().zip(state.amplitudes()) {
        if c.norm_sqr() == 0.0 {
            continue;
        }
        for s in -steps..=steps {
            let row = window.position(m + s * h).unwrap();
            out[row] += kernel[(s + steps) as usize] * c;
        }
    }
    Ok(SidebandState::from_raw(window, out))
}

/// State prepared from `|0>` by a single coupling, on the window of its reach.
pub fn prepare_pure(g: &Coupling) -> Result<SidebandState> {
    let stride = g.harmonic();
    let vacuum = SidebandState::zero_loss(SidebandWindow::new(0, 0, stride)?);
    modulate(&vacuum, g, 0.0)
}

/// Closed-form two-color amplitudes
/// `c_N = sum_m e^{i(N-2m)theta} J_{N-2m}(2|g1|) J_m(2|g2|)` (coupling phases included).
pub fn two_color_amplitudes(
    g1: &Coupling,
    g2: &Coupling,
    theta: f64,
    window: &SidebandWindow,
) -> Result<SidebandState> {
    if g1.harmonic() != 1 || g2.harmonic() != 2 {
        return Err(Error::InvalidCoupling(
            "two-color amplitudes need a fundamental and a second-harmonic coupling".into(),
        ));
    }
    let reach = (g1.reach() + g2.reach()) as i32;
    if window.n_max() < reach || window.n_min() > -reach {
        return Err(Error::WindowTooSmall {
            n_min: window.n_min(),
            n_max: window.n_max(),
            reach,
        });
    }
    let k1 = g1.kernel(theta);
    let k2 = g2.kernel(0.0);
    let s1 = g1.reach_steps() as i32;
    let s2 = g2.reach_steps() as i32;
    let amplitudes: Vec<Complex64> = window
        .indices()
        .map(|n| {
            let mut acc = Complex64::new(0.0, 0.0);
            for m in -s2..=s2 {
                let r = n - 2 * m;
                if r.abs() <= s1 {
                    acc += k1[(r + s1) as usize] * k2[(m + s2) as usize];
                }
            }
            acc
        })
        .collect();
    let stride = if g1.magnitude() == 0.0 { 2 } else { 1 };
    SidebandState::new(window.with_stride(stride)?, amplitudes)
}

/// `rho_kl -> rho_kl exp(-i chi (k^2 - l^2))`.
pub fn apply_dispersion(rho: &DensityMatrix, chi: f64) -> DensityMatrix {
    let w = rho.window();
    let n = rho.dim();
    let entries = CMatrix::from_fn(n, n, |i, j| {
        let z = rho.entries()[(i, j)];
        if i == j {
            z
        } else {
            let (k, l) = (w.index_at(i) as f64, w.index_at(j) as f64);
            z * Complex64::from_polar(1.0, -chi * (k * k - l * l))
        }
    });
    DensityMatrix::from_raw(*w, entries).expect("shape preserved")
}

/// Probe matrix elements `<l|U(theta)|k>` for observed rows `rows` and
/// source sidebands `cols`, evaluated on the untruncated ladder.
pub(crate) fn probe_block(probe: &Coupling, theta: f64, rows: &SidebandWindow, cols: &[i32]) -> CMatrix {
    let kernel = probe.kernel(theta);
    let steps = probe.reach_steps() as i32;
    let h = probe.harmonic() as i32;
    CMatrix::from_fn(rows.len(), cols.len(), |r, c| {
        let diff = rows.index_at(r) - cols[c];
        if diff % h != 0 {
            return Complex64::new(0.0, 0.0);
        }
        let s = diff / h;
        if s.abs() > steps {
            Complex64::new(0.0, 0.0)
        } else {
            kernel[(s + steps) as usize]
        }
    })
}

/// Observation window that captures everything a probe can scatter out of `state_window`.
pub fn observation_window(state_window: &SidebandWindow, probe: &Coupling) -> SidebandWindow {
    state_window
        .padded(probe.reach())
        .with_stride(1)
        .expect("stride 1 is valid")
}

/// Column `theta` holds `diag(U(theta) rho U(theta)^dagger)` on `window`.
pub fn simulate_spectrogram(
    rho: &DensityMatrix,
    probe: &Coupling,
    theta_grid: &[f64],
    window: &SidebandWindow,
) -> Result<Spectrogram> {
    validate_theta_grid(theta_grid)?;
    let rw = rho.window();
    let occupied: Vec<usize> = (0..rho.dim())
        .filter(|&i| (0..rho.dim()).any(|j| rho.entries()[(i, j)].norm_sqr() > 0.0))
        .collect();
    let cols: Vec<i32> = occupied.iter().map(|&i| rw.index_at(i)).collect();
    let sub = CMatrix::from_fn(occupied.len(), occupied.len(), |a, b| {
        rho.entries()[(occupied[a], occupied[b])]
    });
    let columns: Vec<Vec<f64>> = theta_grid
        .par_iter()
        .map(|&theta| {
            let v = probe_block(probe, theta, window, &cols);
            let vr = &v * &sub;
            (0..window.len())
                .map(|r| {
                    let mut acc = 0.0;
                    for c in 0..cols.len() {
                        acc += (vr[(r, c)] * v[(r, c)].conj()).re;
                    }
                    acc.max(0.0)
                })
                .collect()
        })
        .collect();
    let pops = DMatrix::from_fn(window.len(), theta_grid.len(), |r, c| columns[c][r]);
    Spectrogram::new(pops, theta_grid.to_vec(), *probe, *window, None)
}

/// Per-bin Poisson counting noise at `counts_per_spectrum` expected counts,
/// renormalized to unit column sums. Each column draws from its own stream
/// of a generator seeded with `seed`.
pub fn add_poisson_noise(s: &Spectrogram, counts_per_spectrum: f64, seed: u64) -> Result<Spectrogram> {
    if !(counts_per_spectrum > 0.0) || !counts_per_spectrum.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "counts per spectrum must be positive, got {counts_per_spectrum}"
        )));
    }
    let pops = s.populations();
    let columns: Vec<Vec<f64>> = (0..pops.ncols())
        .into_par_iter()
        .map(|col| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(col as u64);
            let column = pops.column(col);
            let total: f64 = column.sum();
            let scale = if total > 0.0 { counts_per_spectrum / total } else { 0.0 };
            let mut draws: Vec<f64> = column
                .iter()
                .map(|&p| {
                    let lambda = p * scale;
                    if lambda <= 0.0 {
                        0.0
                    } else if lambda < 1e-6 {
                        // the library sampler misbehaves for vanishing rates
                        if rng.gen::<f64>() < lambda {
                            1.0
                        } else {
                            0.0
                        }
                    } else {
                        Poisson::new(lambda)
                            .map(|d| d.sample(&mut rng))
                            .unwrap_or(0.0)
                            .max(0.0)
                    }
                })
                .collect();
            let sum: f64 = draws.iter().sum();
            if sum > 0.0 {
                draws.iter_mut().for_each(|d| *d /= sum);
            }
            draws
        })
        .collect();
    let noisy = DMatrix::from_fn(pops.nrows(), pops.ncols(), |r, c| columns[c][r]);
    Spectrogram::new(
        noisy,
        s.theta_grid().to_vec(),
        *s.probe(),
        *s.window(),
        Some(counts_per_spectrum),
    )
}

/// Probabilists' Gauss-Hermite nodes and normalized weights (Golub-Welsch).
pub fn gauss_hermite(order: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(order >= 1, "quadrature order must be positive");
    let jacobi = DMatrix::from_fn(order, order, |i, j| {
        if i + 1 == j || j + 1 == i {
            (i.max(j) as f64).sqrt()
        } else {
            0.0
        }
    });
    let eig = SymmetricEigen::new(jacobi);
    let mut pairs: Vec<(f64, f64)> = (0..order)
        .map(|k| (eig.eigenvalues[k], eig.eigenvectors[(0, k)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = pairs.iter().map(|p| p.1).sum();
    pairs.into_iter().map(|(x, w)| (x, w / total)).unzip()
}

/// Incoherent average of `state` over relative-phase offsets `~ N(0, sigma^2)`.
pub fn jitter_average(state: &SidebandState, sigma_phase: f64, nodes: usize) -> Result<DensityMatrix> {
    if !(sigma_phase >= 0.0) || !sigma_phase.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "phase jitter must be non-negative, got {sigma_phase}"
        )));
    }
    if sigma_phase == 0.0 || nodes <= 1 {
        return Ok(state.to_density());
    }
    let (x, w) = gauss_hermite(nodes);
    let n = state.window().len();
    let mut acc = CMatrix::zeros(n, n);
    for (xi, wi) in x.iter().zip(&w) {
        let shifted = state.phase_shifted(sigma_phase * xi);
        acc += DensityMatrix::pure(&shifted).into_entries() * Complex64::new(*wi, 0.0);
    }
    DensityMatrix::from_raw(*state.window(), acc)
}

/// Prepared pure state from `|0>`, dispersed by `chi` and averaged over a
/// Gaussian relative-phase jitter.
pub fn phase_jitter_ensemble(
    g_prep: &Coupling,
    chi: f64,
    sigma_phase: f64,
    n_samples: usize,
) -> Result<DensityMatrix> {
    if n_samples == 0 {
        return Err(Error::InvalidArgument("need at least one quadrature node".into()));
    }
    let state = prepare_pure(g_prep)?.dispersed(chi);
    jitter_average(&state, sigma_phase, n_samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ladder::bessel_j;
    use std::f64::consts::PI;

    #[test]
    fn zero_coupling_leaves_state() {
        let s = prepare_pure(&Coupling::fundamental(1.2).unwrap()).unwrap();
        let out = modulate(&s, &Coupling::fundamental(0.0).unwrap(), 0.7).unwrap();
        assert_eq!(out, s);
    }

    #[test]
    fn second_harmonic_populations() {
        let g = Coupling::second_harmonic(1.85).unwrap();
        let s = prepare_pure(&g).unwrap();
        assert_eq!(s.window().support_stride(), 2);
        for (n, p) in s.window().indices().zip(s.populations()) {
            let want = if n % 2 == 0 { bessel_j(n / 2, 3.70).powi(2) } else { 0.0 };
            assert!((p - want).abs() < 1e-14, "N={n}");
        }
        assert!((s.norm_sqr() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn modulations_commute() {
        let g1 = Coupling::new(1.3, 0.4, 1).unwrap();
        let g2 = Coupling::new(0.8, -0.2, 2).unwrap();
        let vac = SidebandState::zero_loss(SidebandWindow::symmetric(0, 1).unwrap());
        let a = modulate(&modulate(&vac, &g1, 0.3).unwrap(), &g2, 0.0).unwrap();
        let b = modulate(&modulate(&vac, &g2, 0.0).unwrap(), &g1, 0.3).unwrap();
        assert_eq!(a.window(), b.window());
        for (x, y) in a.amplitudes().iter().zip(b.amplitudes()) {
            assert!((x - y).norm() < 1e-10);
        }
    }

    #[test]
    fn two_color_reduces_to_single_color() {
        let g1 = Coupling::fundamental(1.4).unwrap();
        let g2 = Coupling::second_harmonic(0.0).unwrap();
        let w = SidebandWindow::symmetric(g1.reach(), 1).unwrap();
        let s = two_color_amplitudes(&g1, &g2, 0.9, &w).unwrap();
        for n in w.indices() {
            let want = Complex64::from_polar(1.0, n as f64 * 0.9) * bessel_j(n, 2.8);
            assert!((s.amplitude(n) - want).norm() < 1e-13);
        }
    }

    #[test]
    fn two_color_matches_sequential_modulation() {
        let g1 = Coupling::fundamental(2.2).unwrap();
        let g2 = Coupling::second_harmonic(0.76).unwrap();
        let w = SidebandWindow::symmetric(g1.reach() + g2.reach(), 1).unwrap();
        let theta = 1.1;
        let direct = two_color_amplitudes(&g1, &g2, theta, &w).unwrap();
        let seq = modulate(&prepare_pure(&g2).unwrap(), &g1, theta).unwrap();
        for n in w.indices() {
            assert!((direct.amplitude(n) - seq.amplitude(n)).norm() < 1e-12);
        }
        assert!(two_color_amplitudes(&g1, &g2, theta, &SidebandWindow::symmetric(5, 1).unwrap()).is_err());
    }

    #[test]
    fn chi_geometry_values() {
        assert_eq!(chi_from_geometry(&DriftGeometry::standard(0.0)).unwrap(), 0.0);
        let a = chi_from_geometry(&DriftGeometry::standard(1.5e-3)).unwrap();
        let b = chi_from_geometry(&DriftGeometry::standard(3.0e-3)).unwrap();
        assert!((b - 2.0 * a).abs() < 1e-15);
        // direct evaluation with CODATA constants: 0.047027 rad
        assert!((a - 0.047_03).abs() < 1e-4, "{a}");
        let d = distance_for_chi(a, &DriftGeometry::standard(0.0)).unwrap();
        assert!((d - 1.5e-3).abs() < 1e-15);
        let mut bad = DriftGeometry::standard(1e-3);
        bad.kinetic_energy = 0.0;
        assert!(chi_from_geometry(&bad).is_err());
    }

    #[test]
    fn dispersion_keeps_diagonal() {
        let rho = prepare_pure(&Coupling::fundamental(1.0).unwrap()).unwrap().to_density();
        assert_eq!(apply_dispersion(&rho, 0.0), rho);
        let d = apply_dispersion(&rho, 0.37);
        assert_eq!(d.populations(), rho.populations());
        d.validate().unwrap();
    }

    #[test]
    fn vacuum_spectrogram_is_theta_independent() {
        let probe = Coupling::fundamental(2.16).unwrap();
        let w0 = SidebandWindow::symmetric(0, 1).unwrap();
        let rho = SidebandState::zero_loss(w0).to_density();
        let obs = observation_window(&w0, &probe);
        let s = simulate_spectrogram(&rho, &probe, &uniform_theta_grid(8, 2.0 * PI), &obs).unwrap();
        for c in 0..8 {
            for (r, l) in obs.indices().enumerate() {
                assert!((s.populations()[(r, c)] - bessel_j(l, 4.32).powi(2)).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn spectrogram_rejects_bad_grid() {
        let probe = Coupling::fundamental(1.0).unwrap();
        let w0 = SidebandWindow::symmetric(0, 1).unwrap();
        let rho = SidebandState::zero_loss(w0).to_density();
        let obs = observation_window(&w0, &probe);
        assert!(matches!(simulate_spectrogram(&rho, &probe, &[], &obs), Err(Error::EmptyGrid)));
        assert!(simulate_spectrogram(&rho, &probe, &[0.2, 0.1], &obs).is_err());
    }

    #[test]
    fn noise_is_seed_deterministic() {
        let probe = Coupling::fundamental(2.16).unwrap();
        let rho = prepare_pure(&Coupling::second_harmonic(0.63).unwrap()).unwrap().to_density();
        let obs = observation_window(rho.window(), &probe);
        let s = simulate_spectrogram(&rho, &probe, &uniform_theta_grid(24, PI), &obs).unwrap();
        let a = add_poisson_noise(&s, 1e3, 7).unwrap();
        let b = add_poisson_noise(&s, 1e3, 7).unwrap();
        let c = add_poisson_noise(&s, 1e3, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        for sum in a.column_sums() {
            assert!((sum - 1.0).abs() < 1e-12);
        }
        assert!(add_poisson_noise(&s, 0.0, 1).is_err());
        assert!(add_poisson_noise(&s, -3.0, 1).is_err());
    }

    #[test]
    fn gauss_hermite_moments() {
        let (x, w) = gauss_hermite(21);
        let m0: f64 = w.iter().sum();
        let m2: f64 = x.iter().zip(&w).map(|(x, w)| w * x * x).sum();
        let m4: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(4)).sum();
        assert!((m0 - 1.0).abs() < 1e-13);
        assert!((m2 - 1.0).abs() < 1e-12);
        assert!((m4 - 3.0).abs() < 1e-11);
    }

    #[test]
    fn jitter_reduces_purity() {
        let g = Coupling::fundamental(3.95).unwrap();
        let pure = phase_jitter_ensemble(&g, 0.05, 0.0, JITTER_NODES).unwrap();
        assert!((pure.purity() - 1.0).abs() < 1e-10);
        let mut last = 1.0 + 1e-12;
        for &sigma in &[0.0, 0.1, 0.19, 0.5] {
            let rho = phase_jitter_ensemble(&g, 0.05, sigma, JITTER_NODES).unwrap();
            rho.validate().unwrap();
            assert!(rho.purity() < last, "sigma={sigma}");
            last = rho.purity();
        }
        assert!(phase_jitter_ensemble(&g, 0.05, -0.1, JITTER_NODES).is_err());
    }
}
