//! Solver output versus an independent minimizer on small support windows.

mod common;

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use squirrels_core::forward::{observation_window, uniform_theta_grid, Spectrogram};
use squirrels_core::ladder::{Coupling, DensityMatrix, SidebandWindow};
use common::oracle::Toy;
use squirrels_core::squirrels::{
    assemble_forward_operator, solve_tikhonov_psd_with, SolverOptions,
};

fn check(window: SidebandWindow, g: f64, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let probe = Coupling::fundamental(g).unwrap();
    let theta = uniform_theta_grid(12, 2.0 * PI);
    let obs = observation_window(&window, &probe);
    let op = assemble_forward_operator(&probe, &theta, &window).unwrap();

    // inconsistent data: random non-negative spectra
    let pops = DMatrix::from_fn(obs.len(), theta.len(), |_, _| rng.gen_range(0.0..0.2));
    let s = Spectrogram::new(pops.clone(), theta.clone(), probe, obs, None).unwrap();
    let alpha = 0.05 * op.norm_sq();

    let support = window.support();
    let m = support.len();
    let prev = DMatrix::from_fn(m, m, |i, j| {
        if i == j {
            Complex64::new(1.0 / m as f64, 0.0)
        } else {
            Complex64::new(0.02 * (i + j) as f64, 0.01 * (i as f64 - j as f64))
        }
    });
    let mut entries = DMatrix::zeros(window.len(), window.len());
    for (a, &k) in support.iter().enumerate() {
        for (b, &l) in support.iter().enumerate() {
            entries[(window.position(k).unwrap(), window.position(l).unwrap())] = prev[(a, b)];
        }
    }
    let rho_prev = DensityMatrix::from_raw(window, entries).unwrap();

    let opts = SolverOptions {
        kkt_tolerance: 1e-12,
        tolerance: 1e-15,
        ..Default::default()
    };
    let sol = solve_tikhonov_psd_with(&op, &s, alpha, Some(&rho_prev), &opts).unwrap();
    sol.rho.validate().unwrap();

    let rows: Vec<i32> = obs.indices().collect();
    let toy = Toy::new(&support, &rows, &theta, g, pops.as_slice().to_vec(), alpha, prev);
    let oracle = toy.minimize(&mut rng, 3);
    let mut dist = 0.0;
    for (a, &k) in support.iter().enumerate() {
        for (b, &l) in support.iter().enumerate() {
            dist += (sol.rho.entry(k, l) - oracle[(a, b)]).norm_sqr();
        }
    }
    let dist = dist.sqrt();
    let solver_obj = toy.objective(&DMatrix::from_fn(m, m, |a, b| sol.rho.entry(support[a], support[b])));
    assert!(
        dist <= 1e-4,
        "window {window:?}: distance {dist:.3e}, objectives solver {solver_obj:.12e} oracle {:.12e}",
        toy.objective(&oracle)
    );
}

#[test]
fn three_level_stride_one() {
    check(SidebandWindow::new(-1, 1, 1).unwrap(), 0.6, 1);
}

#[test]
fn three_level_stride_two() {
    check(SidebandWindow::new(-2, 2, 2).unwrap(), 0.9, 2);
}

#[test]
fn three_level_asymmetric() {
    check(SidebandWindow::new(0, 2, 1).unwrap(), 1.3, 3);
}

#[test]
fn two_level() {
    check(SidebandWindow::new(0, 1, 1).unwrap(), 0.4, 4);
}

#[test]
fn one_level() {
    check(SidebandWindow::new(0, 0, 1).unwrap(), 0.7, 5);
}
