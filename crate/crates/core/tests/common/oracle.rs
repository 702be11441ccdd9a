//! Independent minimizer of the regularized misfit over small density
//! matrices, parameterized as `rho = A A^dagger / tr(A A^dagger)`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use squirrels_core::ladder::bessel_j;

pub struct Toy {
    /// Probe matrix elements `<l|U(theta)|k>`, one `rows x m` block per phase.
    blocks: Vec<DMatrix<Complex64>>,
    data: Vec<f64>,
    alpha: f64,
    center: DMatrix<Complex64>,
    m: usize,
}

impl Toy {
    /// `data` is stacked column-major over `(theta, row)`.
    pub fn new(
        support: &[i32],
        rows: &[i32],
        theta: &[f64],
        g: f64,
        data: Vec<f64>,
        alpha: f64,
        center: DMatrix<Complex64>,
    ) -> Self {
        let blocks = theta
            .iter()
            .map(|&t| {
                DMatrix::from_fn(rows.len(), support.len(), |r, c| {
                    let s = rows[r] - support[c];
                    Complex64::from_polar(1.0, s as f64 * t) * bessel_j(s, 2.0 * g)
                })
            })
            .collect();
        Toy {
            blocks,
            data,
            alpha,
            center,
            m: support.len(),
        }
    }

    pub fn objective(&self, rho: &DMatrix<Complex64>) -> f64 {
        let mut misfit = 0.0;
        let mut idx = 0;
        for v in &self.blocks {
            let vr = v * rho;
            for r in 0..v.nrows() {
                let mut pop = 0.0;
                for c in 0..self.m {
                    pop += (vr[(r, c)] * v[(r, c)].conj()).re;
                }
                misfit += (pop - self.data[idx]).powi(2);
                idx += 1;
            }
        }
        misfit + self.alpha * (rho - &self.center).iter().map(|z| z.norm_sqr()).sum::<f64>()
    }

    pub fn rho_of(&self, params: &[f64]) -> DMatrix<Complex64> {
        let m = self.m;
        let a = DMatrix::from_fn(m, m, |i, j| {
            let k = 2 * (i * m + j);
            Complex64::new(params[k], params[k + 1])
        });
        let r = &a * a.adjoint();
        let tr = r.trace().re;
        r / Complex64::new(tr, 0.0)
    }

    /// Multi-start compass search, step halved down to `1e-10`.
    pub fn minimize<R: Rng>(&self, rng: &mut R, starts: usize) -> DMatrix<Complex64> {
        let dim = 2 * self.m * self.m;
        let f = |p: &[f64]| self.objective(&self.rho_of(p));
        let mut best: Option<(Vec<f64>, f64)> = None;
        for _ in 0..starts {
            let mut x: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mut fx = f(&x);
            let mut step = 0.5;
            while step > 1e-10 {
                let mut improved = false;
                for k in 0..dim {
                    for sign in [1.0, -1.0] {
                        x[k] += sign * step;
                        let fy = f(&x);
                        if fy < fx {
                            fx = fy;
                            improved = true;
                            break;
                        }
                        x[k] -= sign * step;
                    }
                }
                if !improved {
                    step *= 0.5;
                }
            }
            if best.as_ref().map_or(true, |b| fx < b.1) {
                best = Some((x, fx));
            }
        }
        self.rho_of(&best.unwrap().0)
    }
}
