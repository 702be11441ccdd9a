use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use super::{CMatrix, SidebandState, SidebandWindow};
use crate::error::{Error, Result};

pub const HERMITIAN_TOL: f64 = 1e-12;
pub const TRACE_TOL: f64 = 1e-10;
pub const PSD_TOL: f64 = 1e-9;

/// Density matrix over a sideband window, indexed by `(k, l)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    window: SidebandWindow,
    entries: CMatrix,
}

impl DensityMatrix {
    /// Validates shape, Hermiticity, unit trace and positivity.
    pub fn new(window: SidebandWindow, entries: CMatrix) -> Result<Self> {
        let rho = Self::from_raw(window, entries)?;
        rho.validate()?;
        Ok(rho)
    }

    /// Shape-checked constructor that skips the physical invariants.
    pub fn from_raw(window: SidebandWindow, entries: CMatrix) -> Result<Self> {
        let n = window.len();
        if entries.nrows() != n || entries.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: entries.nrows().max(entries.ncols()),
            });
        }
        Ok(DensityMatrix { window, entries })
    }

    pub fn pure(state: &SidebandState) -> Self {
        let c = nalgebra::DVector::from_column_slice(state.amplitudes());
        DensityMatrix {
            window: *state.window(),
            entries: &c * c.adjoint(),
        }
    }

    /// `I / m` on the support lattice of `window`.
    pub fn maximally_mixed(window: SidebandWindow) -> Self {
        let support = window.support();
        let w = 1.0 / support.len() as f64;
        let mut entries = CMatrix::zeros(window.len(), window.len());
        for n in support {
            let p = window.position(n).unwrap();
            entries[(p, p)] = Complex64::new(w, 0.0);
        }
        DensityMatrix { window, entries }
    }

    pub fn window(&self) -> &SidebandWindow {
        &self.window
    }

    pub fn entries(&self) -> &CMatrix {
        &self.entries
    }

    pub fn into_entries(self) -> CMatrix {
        self.entries
    }

    pub fn dim(&self) -> usize {
        self.window.len()
    }

    /// `rho_{kl}`, zero outside the window.
    pub fn entry(&self, k: i32, l: i32) -> Complex64 {
        match (self.window.position(k), self.window.position(l)) {
            (Some(i), Some(j)) => self.entries[(i, j)],
            _ => Complex64::new(0.0, 0.0),
        }
    }

    pub fn trace(&self) -> Complex64 {
        self.entries.trace()
    }

    /// `tr(rho^2)`.
    pub fn purity(&self) -> f64 {
        self.entries.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Diagonal `rho_kk` over the window.
    pub fn populations(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.entries[(i, i)].re).collect()
    }

    pub fn mean_sideband(&self) -> f64 {
        self.window
            .indices()
            .zip(self.populations())
            .map(|(n, p)| n as f64 * p)
            .sum()
    }

    /// Largest `|rho_kl - conj(rho_lk)|`.
    pub fn hermitian_defect(&self) -> f64 {
        let n = self.dim();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in i..n {
                worst = worst.max((self.entries[(i, j)] - self.entries[(j, i)].conj()).norm());
            }
        }
        worst
    }

    /// Eigenvalues of the Hermitian part, ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let herm = hermitian_part(&self.entries);
        let mut ev: Vec<f64> = SymmetricEigen::new(herm).eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues()[0]
    }

    pub fn validate(&self) -> Result<()> {
        let herm = self.hermitian_defect();
        if herm > HERMITIAN_TOL {
            return Err(Error::InvalidDensity(format!("Hermitian defect {herm:.3e}")));
        }
        let tr = self.trace();
        if (tr.re - 1.0).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
            return Err(Error::InvalidDensity(format!("trace {tr}")));
        }
        let min = self.min_eigenvalue();
        if min < -PSD_TOL {
            return Err(Error::InvalidDensity(format!("eigenvalue {min:.3e} < 0")));
        }
        Ok(())
    }

    /// Copies into a window containing this one.
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
        let off = (self.window.n_min() - window.n_min()) as usize;
        let n = self.dim();
        let mut entries = CMatrix::zeros(window.len(), window.len());
        entries.view_mut((off, off), (n, n)).copy_from(&self.entries);
        Ok(DensityMatrix {
            window: *window,
            entries,
        })
    }

    /// Restriction to a sub-window; entries outside are dropped.
    pub fn restrict(&self, window: &SidebandWindow) -> Self {
        let n = window.len();
        let entries = CMatrix::from_fn(n, n, |i, j| {
            self.entry(window.index_at(i), window.index_at(j))
        });
        DensityMatrix {
            window: *window,
            entries,
        }
    }

    /// Same entries with the window's support stride relabelled.
    pub fn with_window(&self, window: SidebandWindow) -> Result<Self> {
        Self::from_raw(window, self.entries.clone())
    }

    /// Frobenius norm `||self - other||` over the union of both windows.
    pub fn frobenius_distance(&self, other: &DensityMatrix) -> f64 {
        let hull = self.window.hull(&other.window);
        let mut sum = 0.0;
        for k in hull.indices() {
            for l in hull.indices() {
                sum += (self.entry(k, l) - other.entry(k, l)).norm_sqr();
            }
        }
        sum.sqrt()
    }

    /// Eigen-decomposition of the Hermitian part.
    pub fn eigen(&self) -> SymmetricEigen<Complex64, nalgebra::Dyn> {
        SymmetricEigen::new(hermitian_part(&self.entries))
    }
}

pub(crate) fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()).scale(0.5)
}

/// `U rho U^dagger`.
pub fn apply_unitary(u: &CMatrix, rho: &DensityMatrix) -> Result<DensityMatrix> {
    let n = rho.dim();
    if u.nrows() != n || u.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: if u.nrows() != n { u.nrows() } else { u.ncols() },
        });
    }
    let entries: DMatrix<Complex64> = u * rho.entries() * u.adjoint();
    let window = rho.window();
    let stride = window.support_stride();
    let keeps_lattice = stride == 1
        || (0..n).all(|i| {
            (0..n).all(|j| {
                (window.is_supported(window.index_at(i)) && window.is_supported(window.index_at(j)))
                    || entries[(i, j)].norm() < 1e-14
            })
        });
    let window = if keeps_lattice {
        *window
    } else {
        window.with_stride(1)?
    };
    DensityMatrix::from_raw(window, entries)
}
