mod common;

use std::f64::consts::PI;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use squirrels_core::analysis::{
    period_grid, pulse_metrics, state_distance, temporal_density, wigner_from_density, OPTICAL_PERIOD,
};
use squirrels_core::forward::{apply_dispersion, prepare_pure};
use squirrels_core::ladder::{Coupling, SidebandWindow};

/// Circular rms of `1 + cos(wt)` from an adaptive quadrature of the first
/// trigonometric moment, evaluated offline.
const RAISED_COSINE_RMS: f64 = 5.000542745589085e-16;

#[test]
fn raised_cosine_rms_matches_quadrature() {
    let n: Vec<f64> = (0..4096)
        .map(|i| 1.0 + (2.0 * PI * i as f64 / 4096.0).cos())
        .collect();
    let m = pulse_metrics(&n, OPTICAL_PERIOD).unwrap();
    assert!((m.rms_width - RAISED_COSINE_RMS).abs() < 1e-6 * RAISED_COSINE_RMS, "{m:?}");
}

#[test]
fn single_color_wigner_has_negative_values() {
    let rho = prepare_pure(&Coupling::fundamental(1.0).unwrap()).unwrap().to_density();
    let w = wigner_from_density(&rho, 256).unwrap();
    let min = w.values.iter().copied().fold(f64::INFINITY, f64::min);
    assert!(min < -1e-3, "min W = {min}");
    assert!(w.imag_residue < 1e-10);
}

#[test]
fn incoherent_mixture_has_flat_density() {
    let rho = prepare_pure(&Coupling::fundamental(2.3).unwrap()).unwrap().to_density();
    let diag = nalgebra::DMatrix::from_diagonal(&rho.entries().diagonal());
    let rho = squirrels_core::ladder::DensityMatrix::new(*rho.window(), diag).unwrap();
    for v in temporal_density(&rho, &period_grid(100)) {
        assert!((v - 1.0).abs() < 1e-12);
    }
}

#[test]
fn fidelity_is_symmetric_on_random_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let wa = common::random_window(&mut rng, 6, 1);
        let wb = common::random_window(&mut rng, 6, 1);
        let ra = rng.gen_range(1..4);
        let rb = rng.gen_range(1..4);
        let a = common::random_density(&mut rng, wa, ra);
        let b = common::random_density(&mut rng, wb, rb);
        let ab = state_distance(&a, &b).unwrap();
        let ba = state_distance(&b, &a).unwrap();
        assert!((ab.fidelity - ba.fidelity).abs() < 1e-9, "{ab:?} {ba:?}");
        assert!((ab.frobenius - ba.frobenius).abs() < 1e-12);
        assert!((0.0..=1.0).contains(&ab.fidelity));
    }
}

#[test]
fn fidelity_matches_closed_forms() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let w = SidebandWindow::symmetric(2, 1).unwrap();
    for _ in 0..20 {
        // pure argument: <psi|sigma|psi>
        let pure = common::random_density(&mut rng, w, 1);
        let mixed = common::random_density(&mut rng, w, 5);
        let eig = pure.entries().clone().symmetric_eigen();
        let psi = eig.eigenvectors.column(eig.eigenvalues.imax()).into_owned();
        let want = (psi.adjoint() * mixed.entries() * &psi)[(0, 0)].re;
        let got = state_distance(&mixed, &pure).unwrap().fidelity;
        assert!((got - want).abs() < 1e-12);

        // commuting mixed states: classical fidelity
        let p: Vec<f64> = (0..5).map(|_| rng.gen_range(0.05..1.0)).collect();
        let q: Vec<f64> = (0..5).map(|_| rng.gen_range(0.05..1.0)).collect();
        let (sp, sq): (f64, f64) = (p.iter().sum(), q.iter().sum());
        let diag = |v: &[f64], s: f64| {
            let d = nalgebra::DVector::from_iterator(5, v.iter().map(|x| num_complex::Complex64::new(x / s, 0.0)));
            squirrels_core::ladder::DensityMatrix::new(w, nalgebra::DMatrix::from_diagonal(&d)).unwrap()
        };
        let bc: f64 = p.iter().zip(&q).map(|(a, b)| (a / sp * b / sq).sqrt()).sum();
        let got = state_distance(&diag(&p, sp), &diag(&q, sq)).unwrap().fidelity;
        assert!((got - bc * bc).abs() < 1e-12, "{got} vs {}", bc * bc);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn wigner_marginals(seed in any::<u64>(), stride in 1u8..=2, rank in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let window = common::random_window(&mut rng, 9, stride);
        let rho = common::random_density(&mut rng, window, rank);
        let n_time = 64;
        let w = wigner_from_density(&rho, n_time).unwrap();
        prop_assert!(w.imag_residue < 1e-10);
        for (row, &j) in w.energies.iter().enumerate() {
            let mean = w.values.row(row).sum() / n_time as f64;
            let want = if j.fract() == 0.0 { rho.entry(j as i32, j as i32).re } else { 0.0 };
            prop_assert!((mean - want).abs() < 1e-10, "j={} {} vs {}", j, mean, want);
        }
        let n = temporal_density(&rho, &w.times);
        for (c, nt) in n.iter().enumerate() {
            prop_assert!((w.values.column(c).sum() - nt).abs() < 1e-10);
        }
    }

    #[test]
    fn density_is_nonnegative_with_unit_mean(seed in any::<u64>(), rank in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let window = common::random_window(&mut rng, 12, 1);
        let rho = common::random_density(&mut rng, window, rank);
        let n = temporal_density(&rho, &period_grid(256));
        prop_assert!(n.iter().all(|&v| v >= -1e-9));
        let mean = n.iter().sum::<f64>() / n.len() as f64;
        prop_assert!((mean - 1.0).abs() < 1e-10);
    }

    #[test]
    fn metrics_are_shift_invariant(g in 0.5f64..3.0, chi in 0.0f64..0.2, seed in any::<u64>()) {
        let rho = prepare_pure(&Coupling::fundamental(g).unwrap()).unwrap().to_density();
        let rho = apply_dispersion(&rho, chi);
        let len = 4096;
        let n = temporal_density(&rho, &period_grid(len));
        let base = match pulse_metrics(&n, OPTICAL_PERIOD) {
            Ok(m) => m,
            Err(_) => return Ok(()),
        };
        let dt = OPTICAL_PERIOD / len as f64;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..17 {
            let shift = rng.gen_range(0..len);
            let mut shifted = n.clone();
            shifted.rotate_right(shift);
            let m = pulse_metrics(&shifted, OPTICAL_PERIOD).unwrap();
            prop_assert!((m.rms_width - base.rms_width).abs() <= dt);
            prop_assert!((m.fwhm - base.fwhm).abs() <= dt);
            prop_assert!((m.baseline_fraction - base.baseline_fraction).abs() < 1e-12);
            let moved = (base.peak_time + shift as f64 * dt).rem_euclid(OPTICAL_PERIOD);
            let gap = (m.peak_time - moved).abs();
            // ties between equal maxima may resolve to another sample of the same plateau
            prop_assert!(gap <= dt * 1.0001 || (OPTICAL_PERIOD - gap) <= dt * 1.0001 || m.multi_peak);
        }
    }
}
