use std::f64::consts::{LN_2, PI};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Energy-loss spectrum on an axis relative to the zero-loss line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSpectrum {
    /// eV, strictly increasing.
    pub energy_axis: Vec<f64>,
    pub counts: Vec<f64>,
    /// Photon energy in eV (1.55 for 800 nm).
    pub photon_energy: f64,
}

impl RawSpectrum {
    pub fn validate(&self) -> Result<()> {
        if self.energy_axis.is_empty() || self.counts.is_empty() {
            return Err(Error::InvalidArgument("empty spectrum".into()));
        }
        if self.energy_axis.len() != self.counts.len() {
            return Err(Error::DimensionMismatch {
                expected: self.energy_axis.len(),
                actual: self.counts.len(),
            });
        }
        if !self.energy_axis.windows(2).all(|w| w[1] > w[0]) || self.energy_axis.iter().any(|e| !e.is_finite()) {
            return Err(Error::InvalidArgument("energy axis must be finite and strictly increasing".into()));
        }
        if self.counts.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
            return Err(Error::InvalidArgument("counts must be finite and non-negative".into()));
        }
        if self.counts.iter().sum::<f64>() <= 0.0 {
            return Err(Error::InvalidArgument("spectrum has no counts".into()));
        }
        if !(self.photon_energy > 0.0 && self.photon_energy.is_finite()) {
            return Err(Error::InvalidArgument("photon energy must be positive".into()));
        }
        Ok(())
    }
}

/// Asymmetric Gaussian `a exp(-(E - center)^2 / 2 sigma^2)` with separate
/// widths below and above the center.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Background {
    pub amplitude: f64,
    pub center: f64,
    pub sigma_left: f64,
    pub sigma_right: f64,
}

impl Background {
    fn shape(center: f64, sigma_left: f64, sigma_right: f64, e: f64) -> f64 {
        let s = if e < center { sigma_left } else { sigma_right };
        (-(e - center).powi(2) / (2.0 * s * s)).exp()
    }

    pub fn eval(&self, e: f64) -> f64 {
        self.amplitude * Self::shape(self.center, self.sigma_left, self.sigma_right, e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractOptions {
    pub fit_background: bool,
    /// Relative residual `||fit - counts|| / ||counts||` above which a warning is attached.
    pub residual_warning: f64,
}

impl Default for ExtractOptions {
    fn default() -> Self {
        ExtractOptions {
            fit_background: true,
            residual_warning: 0.05,
        }
    }
}

/// Result of the comb fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SidebandFit {
    /// Index of the first entry of `populations`.
    pub n_min: i32,
    /// Peak areas normalized to unit sum.
    pub populations: Vec<f64>,
    /// Un-normalized peak areas in counts x eV.
    pub areas: Vec<f64>,
    /// Shared full width at half maximum, eV.
    pub width: f64,
    /// Lorentzian fraction of the pseudo-Voigt profile.
    pub eta: f64,
    /// Shift of the whole comb, eV.
    pub offset: f64,
    pub background: Option<Background>,
    pub relative_residual: f64,
    pub warning: Option<String>,
}

/// Unit-area pseudo-Voigt with full width `w` and Lorentzian fraction `eta`.
pub fn pseudo_voigt(x: f64, w: f64, eta: f64) -> f64 {
    let hw = 0.5 * w;
    let lorentz = hw / (PI * (x * x + hw * hw));
    let a = 4.0 * LN_2 / (w * w);
    let gauss = (a / PI).sqrt() * (-a * x * x).exp();
    eta * lorentz + (1.0 - eta) * gauss
}

/// Lawson-Hanson non-negative least squares `min ||A x - b||, x >= 0`.
pub fn nnls(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let n = a.ncols();
    let gram = a.tr_mul(a);
    let atb = a.tr_mul(b);
    let tol = 1e-13 * atb.amax().max(f64::MIN_POSITIVE);
    let mut x = DVector::zeros(n);
    let mut passive = vec![false; n];

    let solve_passive = |passive: &[bool]| -> DVector<f64> {
        let idx: Vec<usize> = (0..n).filter(|&i| passive[i]).collect();
        let k = idx.len();
        let g = DMatrix::from_fn(k, k, |i, j| gram[(idx[i], idx[j])]);
        let c = DVector::from_fn(k, |i, _| atb[idx[i]]);
        let sol = match g.clone().cholesky() {
            Some(ch) => ch.solve(&c),
            None => g.svd(true, true).solve(&c, 1e-14).unwrap_or_else(|_| DVector::zeros(k)),
        };
        let mut s = DVector::zeros(n);
        for (i, &j) in idx.iter().enumerate() {
            s[j] = sol[i];
        }
        s
    };

    for _ in 0..3 * n + 10 {
        let w = &atb - &gram * &x;
        let Some(j) = (0..n)
            .filter(|&i| !passive[i] && w[i] > tol)
            .max_by(|&p, &q| w[p].total_cmp(&w[q]))
        else {
            break;
        };
        passive[j] = true;
        loop {
            let s = solve_passive(&passive);
            if (0..n).filter(|&i| passive[i]).all(|i| s[i] > 0.0) {
                x = s;
                break;
            }
            let (limit, step) = (0..n)
                .filter(|&i| passive[i] && s[i] <= 0.0)
                .map(|i| (i, x[i] / (x[i] - s[i])))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .expect("some passive coefficient is non-positive");
            x += (s - &x) * step;
            x[limit] = 0.0;
            let floor = f64::EPSILON * x.amax();
            for i in 0..n {
                if passive[i] && x[i] <= floor {
                    passive[i] = false;
                    x[i] = 0.0;
                }
            }
            if !passive.iter().any(|&p| p) {
                break;
            }
        }
    }
    x
}

/// Downhill simplex on `f` starting from `x0` with initial edge lengths `scale`.
pub(crate) fn nelder_mead<F: Fn(&[f64]) -> f64>(f: F, x0: &[f64], scale: &[f64], tol: f64, max_iter: usize) -> (Vec<f64>, f64) {
    let d = x0.len();
    let mut simplex: Vec<Vec<f64>> = vec![x0.to_vec()];
    for k in 0..d {
        let mut p = x0.to_vec();
        p[k] += scale[k];
        simplex.push(p);
    }
    let mut vals: Vec<f64> = simplex.iter().map(|p| f(p)).collect();
    for _ in 0..max_iter {
        let mut order: Vec<usize> = (0..=d).collect();
        order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        vals = order.iter().map(|&i| vals[i]).collect();

        let diameter = simplex[1..]
            .iter()
            .map(|p| p.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if diameter < tol {
            break;
        }
        let centroid: Vec<f64> = (0..d)
            .map(|k| simplex[..d].iter().map(|p| p[k]).sum::<f64>() / d as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            centroid.iter().zip(&simplex[d]).map(|(c, w)| c + t * (w - c)).collect()
        };
        let xr = along(-1.0);
        let fr = f(&xr);
        if fr < vals[0] {
            let xe = along(-2.0);
            let fe = f(&xe);
            if fe < fr {
                simplex[d] = xe;
                vals[d] = fe;
            } else {
                simplex[d] = xr;
                vals[d] = fr;
            }
        } else if fr < vals[d - 1] {
            simplex[d] = xr;
            vals[d] = fr;
        } else {
            let (xc, fc) = if fr < vals[d] {
                let xc = along(-0.5);
                let fc = f(&xc);
                (xc, fc)
            } else {
                let xc = along(0.5);
                let fc = f(&xc);
                (xc, fc)
            };
            if fc < vals[d].min(fr) {
                simplex[d] = xc;
                vals[d] = fc;
            } else {
                // shrink towards the best vertex
                for i in 1..=d {
                    let p: Vec<f64> = simplex[i].iter().zip(&simplex[0]).map(|(a, b)| b + 0.5 * (a - b)).collect();
                    vals[i] = f(&p);
                    simplex[i] = p;
                }
            }
        }
    }
    let best = (0..=d).min_by(|&a, &b| vals[a].total_cmp(&vals[b])).unwrap();
    (simplex[best].clone(), vals[best])
}

/// Nonlinear shape of the model; amplitudes are solved linearly.
#[derive(Debug, Clone, Copy)]
struct Shape {
    width: f64,
    eta: f64,
    offset: f64,
    background: Option<(f64, f64, f64)>,
}

struct CombModel<'a> {
    s: &'a RawSpectrum,
    y: DVector<f64>,
    orders: Vec<i32>,
}

struct Evaluation {
    coeffs: DVector<f64>,
    residual: f64,
}

impl<'a> CombModel<'a> {
    fn new(s: &'a RawSpectrum) -> Self {
        let (lo, hi) = (s.energy_axis[0], *s.energy_axis.last().unwrap());
        let n_lo = (lo / s.photon_energy).ceil() as i32;
        let n_hi = (hi / s.photon_energy).floor() as i32;
        CombModel {
            s,
            y: DVector::from_column_slice(&s.counts),
            orders: (n_lo..=n_hi).collect(),
        }
    }

    fn design(&self, shape: &Shape) -> DMatrix<f64> {
        let extra = usize::from(shape.background.is_some());
        let e = &self.s.energy_axis;
        DMatrix::from_fn(e.len(), self.orders.len() + extra, |i, j| {
            if j < self.orders.len() {
                let center = self.orders[j] as f64 * self.s.photon_energy + shape.offset;
                pseudo_voigt(e[i] - center, shape.width, shape.eta)
            } else {
                let (c, sl, sr) = shape.background.unwrap();
                Background::shape(c, sl, sr, e[i])
            }
        })
    }

    fn evaluate(&self, shape: &Shape) -> Evaluation {
        let a = self.design(shape);
        let coeffs = nnls(&a, &self.y);
        let residual = (&a * &coeffs - &self.y).norm_squared();
        Evaluation { coeffs, residual }
    }

    fn objective(&self, shape: &Shape) -> f64 {
        let bad_bg = shape
            .background
            .is_some_and(|(_, sl, sr)| !(sl > 1e-3 && sr > 1e-3 && sl < 1e3 && sr < 1e3));
        if !(shape.width > 1e-3 && shape.width < 10.0) || !(0.0..=1.0).contains(&shape.eta) || bad_bg {
            return f64::INFINITY;
        }
        self.evaluate(shape).residual
    }
}

/// Fits the sideband comb with default options.
pub fn extract_sidebands(s: &RawSpectrum) -> Result<SidebandFit> {
    extract_sidebands_with(s, &ExtractOptions::default())
}

/// Fits `sum_N A_N PV(E - N hw - offset; w, eta)` plus an optional
/// asymmetric-Gaussian background and returns the normalized `A_N`.
///
/// `(w, eta)` start from the best point of a 20 x 11 grid over
/// `[0.1, 1] eV x [0, 1]`; the background starts from the comb-only
/// residual; all shape parameters are then polished by Nelder-Mead.
pub fn extract_sidebands_with(s: &RawSpectrum, opts: &ExtractOptions) -> Result<SidebandFit> {
    s.validate()?;
    let model = CombModel::new(s);
    if model.orders.is_empty() {
        return Err(Error::InvalidArgument(
            "energy axis does not cover any sideband position".into(),
        ));
    }

    let (w0, eta0) = (0..20 * 11)
        .into_par_iter()
        .map(|k| {
            let width = 0.1 + 0.9 * (k / 11) as f64 / 19.0;
            let eta = (k % 11) as f64 / 10.0;
            let shape = Shape {
                width,
                eta,
                offset: 0.0,
                background: None,
            };
            (model.objective(&shape), width, eta)
        })
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, w, e)| (w, e))
        .expect("non-empty grid");

    // background guess from the comb-only residual
    let background0 = if opts.fit_background {
        let shape = Shape {
            width: w0,
            eta: eta0,
            offset: 0.0,
            background: None,
        };
        let a = model.design(&shape);
        let fit = &a * model.evaluate(&shape).coeffs;
        let resid: Vec<f64> = model.y.iter().zip(fit.iter()).map(|(y, f)| y - f).collect();
        let (k, &peak) = resid
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .expect("non-empty");
        if peak > 1e-3 * model.y.amax() {
            let e = &s.energy_axis;
            let mut l = k;
            while l > 0 && resid[l] > 0.5 * peak {
                l -= 1;
            }
            let mut r = k;
            while r + 1 < resid.len() && resid[r] > 0.5 * peak {
                r += 1;
            }
            let to_sigma = |d: f64| (d / (2.0 * LN_2).sqrt()).max(0.2);
            Some((e[k], to_sigma(e[k] - e[l]), to_sigma(e[r] - e[k])))
        } else {
            None
        }
    } else {
        None
    };

    let unpack = |p: &[f64]| Shape {
        width: p[0],
        eta: p[1],
        offset: p[2],
        background: background0.map(|_| (p[3], p[4].exp(), p[5].exp())),
    };
    let mut x0 = vec![w0, eta0, 0.0];
    let mut scale = vec![0.05, 0.1, 0.05];
    if let Some((c, sl, sr)) = background0 {
        x0.extend([c, sl.ln(), sr.ln()]);
        scale.extend([0.5, 0.2, 0.2]);
    }
    let f = |p: &[f64]| model.objective(&unpack(p));
    let floor = 1e-26 * model.y.norm_squared();
    let (mut x, mut fx) = nelder_mead(f, &x0, &scale, 1e-9, 3000);
    // restarts shake the simplex out of premature collapse
    for _ in 0..3 {
        if fx <= floor {
            break;
        }
        let small: Vec<f64> = scale.iter().map(|s| s * 0.1).collect();
        let (x2, f2) = nelder_mead(f, &x, &small, 1e-9, 3000);
        let done = f2 >= fx * (1.0 - 1e-6);
        if f2 < fx {
            x = x2;
            fx = f2;
        }
        if done {
            break;
        }
    }

    let shape = unpack(&x);
    let eval = model.evaluate(&shape);
    let k = model.orders.len();
    let areas: Vec<f64> = eval.coeffs.iter().take(k).copied().collect();
    let total: f64 = areas.iter().sum();
    if total <= 0.0 {
        return Err(Error::Fit("no sideband weight in the fitted comb".into()));
    }
    let background = shape.background.map(|(center, sigma_left, sigma_right)| Background {
        amplitude: eval.coeffs[k],
        center,
        sigma_left,
        sigma_right,
    });
    let relative_residual = eval.residual.sqrt() / model.y.norm();
    let warning = (relative_residual > opts.residual_warning).then(|| {
        let msg = format!("sideband fit residual {relative_residual:.3e} exceeds {:.3e}", opts.residual_warning);
        log::warn!("{msg}");
        msg
    });
    Ok(SidebandFit {
        n_min: model.orders[0],
        populations: areas.iter().map(|a| a / total).collect(),
        areas,
        width: shape.width,
        eta: shape.eta,
        offset: shape.offset,
        background,
        relative_residual,
        warning,
    })
}
