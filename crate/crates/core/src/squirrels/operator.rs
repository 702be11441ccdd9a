use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::forward::{probe_block, validate_theta_grid, Spectrogram};
use crate::ladder::{CMatrix, Coupling, DensityMatrix, SidebandWindow};

const SQRT_2: f64 = std::f64::consts::SQRT_2;

/// Real coordinates of Hermitian matrices on a support lattice.
///
/// Layout: the `m` diagonal entries, then `sqrt(2) Re rho_kl` and finally
/// `sqrt(2) Im rho_kl` for `k < l` in row-major order, so the Euclidean
/// norm of the vector equals the Hilbert-Schmidt norm of the matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameterization {
    window: SidebandWindow,
    support: Vec<i32>,
    pairs: Vec<(usize, usize)>,
}

impl Parameterization {
    pub fn new(window: SidebandWindow) -> Self {
        let support = window.support();
        let m = support.len();
        let pairs = (0..m)
            .flat_map(|i| (i + 1..m).map(move |j| (i, j)))
            .collect();
        Parameterization {
            window,
            support,
            pairs,
        }
    }

    pub fn window(&self) -> &SidebandWindow {
        &self.window
    }

    /// Occupiable sidebands.
    pub fn support(&self) -> &[i32] {
        &self.support
    }

    /// Number of support levels `m`.
    pub fn levels(&self) -> usize {
        self.support.len()
    }

    /// Number of real parameters, `m^2`.
    pub fn dim(&self) -> usize {
        self.support.len() * self.support.len()
    }

    pub(crate) fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    /// Support-lattice block of `rho` flattened; entries off the lattice are ignored.
    pub fn to_vector(&self, rho: &DensityMatrix) -> DVector<f64> {
        let block = CMatrix::from_fn(self.levels(), self.levels(), |i, j| {
            rho.entry(self.support[i], self.support[j])
        });
        self.flatten(&block)
    }

    pub fn flatten(&self, block: &CMatrix) -> DVector<f64> {
        let m = self.levels();
        let np = self.pairs.len();
        let mut x = DVector::zeros(self.dim());
        for i in 0..m {
            x[i] = block[(i, i)].re;
        }
        for (p, &(i, j)) in self.pairs.iter().enumerate() {
            let z = block[(i, j)];
            x[m + p] = SQRT_2 * z.re;
            x[m + np + p] = SQRT_2 * z.im;
        }
        x
    }

    /// Hermitian `m x m` block from a parameter vector.
    pub fn unflatten(&self, x: &DVector<f64>) -> CMatrix {
        let m = self.levels();
        let np = self.pairs.len();
        let mut block = CMatrix::zeros(m, m);
        for i in 0..m {
            block[(i, i)] = Complex64::new(x[i], 0.0);
        }
        for (p, &(i, j)) in self.pairs.iter().enumerate() {
            let z = Complex64::new(x[m + p], x[m + np + p]) / SQRT_2;
            block[(i, j)] = z;
            block[(j, i)] = z.conj();
        }
        block
    }

    /// Density matrix over the full window (not validated).
    pub fn to_density(&self, x: &DVector<f64>) -> DensityMatrix {
        let block = self.unflatten(x);
        let n = self.window.len();
        let mut entries = CMatrix::zeros(n, n);
        let pos: Vec<usize> = self
            .support
            .iter()
            .map(|&k| self.window.position(k).unwrap())
            .collect();
        for i in 0..pos.len() {
            for j in 0..pos.len() {
                entries[(pos[i], pos[j])] = block[(i, j)];
            }
        }
        DensityMatrix::from_raw(self.window, entries).expect("shape matches window")
    }

    /// Euclidean projection onto trace-one positive semidefinite matrices.
    pub fn project(&self, x: &DVector<f64>) -> DVector<f64> {
        let block = self.unflatten(x);
        let eig = SymmetricEigen::new(block);
        let lambda: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        let mu = project_simplex(&lambda);
        let v = &eig.eigenvectors;
        let m = self.levels();
        let mut out = CMatrix::zeros(m, m);
        for (k, &w) in mu.iter().enumerate() {
            if w <= 0.0 {
                continue;
            }
            let col = v.column(k);
            for i in 0..m {
                let a = col[i] * w;
                for j in 0..m {
                    out[(i, j)] += a * col[j].conj();
                }
            }
        }
        self.flatten(&out)
    }
}

/// Projection of a vector onto the probability simplex.
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut shift = 0.0;
    for (k, &s) in sorted.iter().enumerate() {
        cum += s;
        let t = (cum - 1.0) / (k + 1) as f64;
        if s - t > 0.0 {
            shift = t;
        }
    }
    v.iter().map(|&x| (x - shift).max(0.0)).collect()
}

/// Matrix of the linear map from density matrices on the support lattice to
/// stacked spectrogram populations.
#[derive(Debug, Clone)]
pub struct ForwardOperator {
    matrix: DMatrix<f64>,
    gram: DMatrix<f64>,
    param: Parameterization,
    obs_window: SidebandWindow,
    theta_grid: Vec<f64>,
    probe: Coupling,
    norm_sq: f64,
}

impl ForwardOperator {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// `T^T T`.
    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn parameterization(&self) -> &Parameterization {
        &self.param
    }

    pub fn state_window(&self) -> &SidebandWindow {
        self.param.window()
    }

    pub fn obs_window(&self) -> &SidebandWindow {
        &self.obs_window
    }

    pub fn theta_grid(&self) -> &[f64] {
        &self.theta_grid
    }

    pub fn probe(&self) -> &Coupling {
        &self.probe
    }

    /// Largest squared singular value, by power iteration.
    pub fn norm_sq(&self) -> f64 {
        self.norm_sq
    }

    /// Stacked populations predicted for a parameter vector.
    pub fn apply_vector(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.matrix * x
    }

    /// Predicted spectrogram for `rho`.
    pub fn apply(&self, rho: &DensityMatrix) -> Result<Spectrogram> {
        let x = self.param.to_vector(rho);
        self.spectrogram_of(&x)
    }

    pub(crate) fn spectrogram_of(&self, x: &DVector<f64>) -> Result<Spectrogram> {
        let y = self.apply_vector(x);
        let rows = self.obs_window.len();
        let pops = DMatrix::from_fn(rows, self.theta_grid.len(), |r, c| y[c * rows + r].max(0.0));
        Spectrogram::new(pops, self.theta_grid.clone(), self.probe, self.obs_window, None)
    }

    /// `||T x - p||` evaluated directly.
    pub fn residual(&self, x: &DVector<f64>, p: &DVector<f64>) -> f64 {
        (&self.matrix * x - p).norm()
    }

    /// Checks that `p` was sampled on this operator's rows and phases.
    pub fn check_data(&self, p: &Spectrogram) -> Result<()> {
        if p.window() != &self.obs_window && p.window().with_stride(1).ok() != Some(self.obs_window) {
            return Err(Error::InvalidArgument(format!(
                "spectrogram rows [{}, {}] differ from operator rows [{}, {}]",
                p.window().n_min(),
                p.window().n_max(),
                self.obs_window.n_min(),
                self.obs_window.n_max()
            )));
        }
        if p.theta_grid() != self.theta_grid.as_slice() {
            return Err(Error::InvalidArgument(
                "spectrogram phase grid differs from the operator's".into(),
            ));
        }
        Ok(())
    }

    /// Ratio of the largest to the smallest singular value of the matrix.
    pub fn condition_number(&self) -> f64 {
        let sv = self.matrix.clone().svd(false, false).singular_values;
        let max = sv.max();
        let min = sv.min();
        if min > 0.0 {
            max / min
        } else {
            f64::INFINITY
        }
    }
}

/// Assembles the forward operator for `probe` on the state window
/// `state_window`, observed on `obs_window` at phases `theta_grid`.
pub fn assemble_forward_operator_on(
    probe: &Coupling,
    theta_grid: &[f64],
    state_window: &SidebandWindow,
    obs_window: &SidebandWindow,
) -> Result<ForwardOperator> {
    validate_theta_grid(theta_grid)?;
    if !state_window.contains(0) {
        return Err(Error::InvalidWindow(format!(
            "state window [{}, {}] must contain the zero-loss line",
            state_window.n_min(),
            state_window.n_max()
        )));
    }
    let param = Parameterization::new(*state_window);
    let m = param.levels();
    let np = param.pairs().len();
    let rows = obs_window.len();
    let n = param.dim();
    let blocks: Vec<DMatrix<f64>> = theta_grid
        .par_iter()
        .map(|&theta| {
            let v = probe_block(probe, theta, obs_window, param.support());
            let mut block = DMatrix::zeros(rows, n);
            for r in 0..rows {
                for k in 0..m {
                    block[(r, k)] = v[(r, k)].norm_sqr();
                }
                for (p, &(i, j)) in param.pairs().iter().enumerate() {
                    let w = v[(r, i)] * v[(r, j)].conj();
                    block[(r, m + p)] = SQRT_2 * w.re;
                    block[(r, m + np + p)] = -SQRT_2 * w.im;
                }
            }
            block
        })
        .collect();
    let mut matrix = DMatrix::zeros(rows * theta_grid.len(), n);
    for (c, block) in blocks.iter().enumerate() {
        matrix.view_mut((c * rows, 0), (rows, n)).copy_from(block);
    }
    let gram = matrix.tr_mul(&matrix);
    let norm_sq = power_iteration(&gram);
    Ok(ForwardOperator {
        matrix,
        gram,
        param,
        obs_window: *obs_window,
        theta_grid: theta_grid.to_vec(),
        probe: *probe,
        norm_sq,
    })
}

/// Forward operator observed on every sideband the probe can reach.
pub fn assemble_forward_operator(
    probe: &Coupling,
    theta_grid: &[f64],
    state_window: &SidebandWindow,
) -> Result<ForwardOperator> {
    let obs = crate::forward::observation_window(state_window, probe);
    assemble_forward_operator_on(probe, theta_grid, state_window, &obs)
}

/// Largest eigenvalue of a symmetric positive semidefinite matrix.
pub(crate) fn power_iteration(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    if n == 0 {
        return 0.0;
    }
    // deterministic start with no special symmetry
    let mut v = DVector::from_fn(n, |i, _| 1.0 + 0.1 * ((i * 7919) % 13) as f64);
    v /= v.norm();
    let mut lambda = 0.0;
    for _ in 0..1000 {
        let w = a * &v;
        let next = v.dot(&w);
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        v = w / norm;
        if (next - lambda).abs() <= 1e-12 * next.abs() {
            lambda = next;
            break;
        }
        lambda = next;
    }
    lambda
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::{observation_window, prepare_pure, simulate_spectrogram, uniform_theta_grid};
    use std::f64::consts::PI;

    #[test]
    fn parameterization_is_isometric() {
        let w = SidebandWindow::symmetric(4, 2).unwrap();
        let rho = prepare_pure(&Coupling::second_harmonic(0.7).unwrap())
            .unwrap()
            .to_density()
            .restrict(&w);
        let param = Parameterization::new(w);
        let x = param.to_vector(&rho);
        assert_eq!(x.len(), 25);
        assert!((x.norm_squared() - rho.purity()).abs() < 1e-14);
        let back = param.to_density(&x);
        assert!(back.frobenius_distance(&rho) < 1e-15);
    }

    #[test]
    fn simplex_projection() {
        assert_eq!(project_simplex(&[0.2, 0.3, 0.5]), vec![0.2, 0.3, 0.5]);
        let p = project_simplex(&[2.0, 0.0, -1.0]);
        assert_eq!(p, vec![1.0, 0.0, 0.0]);
        let p = project_simplex(&[0.0, 0.0]);
        assert_eq!(p, vec![0.5, 0.5]);
    }

    #[test]
    fn projection_is_feasible_and_idempotent() {
        let w = SidebandWindow::symmetric(2, 1).unwrap();
        let param = Parameterization::new(w);
        let x = DVector::from_fn(25, |i, _| ((i * 37 % 11) as f64 - 5.0) / 7.0);
        let y = param.project(&x);
        let rho = param.to_density(&y);
        rho.validate().unwrap();
        let z = param.project(&y);
        assert!((z - &y).norm() < 1e-12);
        // projection of zero is the maximally mixed state
        let zero = param.project(&DVector::zeros(25));
        assert!(param.to_density(&zero).frobenius_distance(&DensityMatrix::maximally_mixed(w)) < 1e-14);
    }

    #[test]
    fn operator_reproduces_simulation() {
        let probe = Coupling::fundamental(2.16).unwrap();
        let w = SidebandWindow::symmetric(6, 2).unwrap();
        let rho = prepare_pure(&Coupling::second_harmonic(0.63).unwrap())
            .unwrap()
            .to_density()
            .restrict(&w);
        let theta = uniform_theta_grid(24, PI);
        let op = assemble_forward_operator(&probe, &theta, &w).unwrap();
        let sim = simulate_spectrogram(&rho, &probe, &theta, &observation_window(&w, &probe)).unwrap();
        let pred = op.apply(&rho).unwrap();
        assert!((pred.populations() - sim.populations()).amax() < 1e-12);
    }

    #[test]
    fn zero_probe_reads_diagonal() {
        let probe = Coupling::fundamental(0.0).unwrap();
        let w = SidebandWindow::symmetric(2, 1).unwrap();
        let op = assemble_forward_operator(&probe, &[0.0, 1.0, 2.0], &w).unwrap();
        let rho = DensityMatrix::maximally_mixed(w);
        let pred = op.apply(&rho).unwrap();
        for c in 0..3 {
            for r in 0..5 {
                assert!((pred.populations()[(r, c)] - 0.2).abs() < 1e-15);
            }
        }
        assert!(assemble_forward_operator(&probe, &[], &w).is_err());
    }

    #[test]
    fn power_iteration_matches_eigen() {
        let probe = Coupling::fundamental(1.5).unwrap();
        let w = SidebandWindow::symmetric(3, 1).unwrap();
        let op = assemble_forward_operator(&probe, &uniform_theta_grid(12, 2.0 * PI), &w).unwrap();
        let exact = SymmetricEigen::new(op.gram().clone()).eigenvalues.max();
        assert!((op.norm_sq() - exact).abs() < 1e-8 * exact);
    }
}
