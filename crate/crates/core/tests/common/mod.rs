//! Helpers shared by integration tests.
#![allow(dead_code)]

pub mod oracle;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use squirrels_core::ladder::{DensityMatrix, SidebandWindow};

/// Random full-rank-ish density matrix `A A^dagger / tr` on `window`'s support.
pub fn random_density<R: Rng>(rng: &mut R, window: SidebandWindow, rank: usize) -> DensityMatrix {
    let support = window.support();
    let a = DMatrix::from_fn(support.len(), rank.max(1), |_, _| {
        Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
    });
    let small = &a * a.adjoint();
    let tr = small.trace().re;
    let mut entries = DMatrix::zeros(window.len(), window.len());
    for (i, &k) in support.iter().enumerate() {
        for (j, &l) in support.iter().enumerate() {
            entries[(window.position(k).unwrap(), window.position(l).unwrap())] = small[(i, j)] / tr;
        }
    }
    DensityMatrix::from_raw(window, entries).unwrap()
}

/// Random window of `len` rungs starting near zero.
pub fn random_window<R: Rng>(rng: &mut R, max_len: i32, stride: u8) -> SidebandWindow {
    let len = rng.gen_range(1..=max_len);
    let lo = rng.gen_range(-(len - 1)..=0);
    let lo = lo - lo.rem_euclid(stride as i32);
    SidebandWindow::new(lo, (lo + len - 1).max(0), stride).unwrap()
}
