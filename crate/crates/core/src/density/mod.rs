//! Probability densities with cell quadrature, and the tools built on them.

pub mod bv;
pub mod perturbation;
pub mod projection_bounds;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{gauss_legendre01, integrate_cell, CellQuadOptions, SimplexRule};
use crate::triangulation::{GridSpec, PathSimplex};
use bv::{gaussian_boltzmann_factor, BvFunction};

/// Default half-width of a Gaussian support box, in standard deviations.
pub const GAUSSIAN_BOX_SIGMAS: f64 = 6.5;

/// Densities below this are treated as zero when dividing.
pub const DENSITY_FLOOR: f64 = 1e-300;

/// Anything the quadrature and residual machinery can integrate against.
pub trait Density: Sync {
    fn dim(&self) -> usize;
    fn eval(&self, x: &[f64]) -> f64;
    fn support_box(&self) -> (Vec<f64>, Vec<f64>);
    /// Coordinates on `axis` where the density may jump or kink.
    fn axis_breakpoints(&self, _axis: usize) -> Vec<f64> {
        Vec::new()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    PiecewiseConstant,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DensityKind {
    Gaussian { mean: Vec<f64>, var: Vec<f64> },
    Product { factors: Vec<DensitySpec> },
    BvPerturbed { base: Box<DensitySpec>, f: BvFunction, weights: Vec<f64>, normalization: f64 },
    Tabulated { lo: Vec<f64>, hi: Vec<f64>, shape: Vec<usize>, values: Vec<f64>, rule: Interpolation },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensitySpec {
    pub kind: DensityKind,
    pub support_lo: Vec<f64>,
    pub support_hi: Vec<f64>,
    pub tail_mass: f64,
}

fn normal_cdf(z: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-z / std::f64::consts::SQRT_2)
}

impl DensitySpec {
    /// Diagonal Gaussian on a box of `GAUSSIAN_BOX_SIGMAS` standard deviations.
    pub fn gaussian(mean: Vec<f64>, var: Vec<f64>) -> Result<Self> {
        let lo = mean.iter().zip(&var).map(|(m, v)| m - GAUSSIAN_BOX_SIGMAS * v.sqrt()).collect();
        let hi = mean.iter().zip(&var).map(|(m, v)| m + GAUSSIAN_BOX_SIGMAS * v.sqrt()).collect();
        Self::gaussian_on_box(mean, var, lo, hi)
    }

    pub fn gaussian_on_box(mean: Vec<f64>, var: Vec<f64>, lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        let d = mean.len();
        if d == 0 || var.len() != d || lo.len() != d || hi.len() != d {
            return Err(Error::InvalidDensity("Gaussian parameters must share a dimension >= 1".into()));
        }
        if var.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidDensity("variances must be positive".into()));
        }
        if lo.iter().zip(&hi).any(|(a, b)| !(a < b)) {
            return Err(Error::InvalidDensity("empty support box".into()));
        }
        let inside: f64 = (0..d)
            .map(|k| {
                let s = var[k].sqrt();
                normal_cdf((hi[k] - mean[k]) / s) - normal_cdf((lo[k] - mean[k]) / s)
            })
            .product();
        Ok(Self {
            kind: DensityKind::Gaussian { mean, var },
            support_lo: lo,
            support_hi: hi,
            tail_mass: (1.0 - inside).max(0.0),
        })
    }

    pub fn standard_gaussian(d: usize) -> Self {
        Self::gaussian(vec![0.0; d], vec![1.0; d]).expect("valid parameters")
    }

    /// Tensor product of one-dimensional factors.
    pub fn product(factors: Vec<DensitySpec>) -> Result<Self> {
        if factors.is_empty() || factors.iter().any(|f| f.dim() != 1) {
            return Err(Error::InvalidDensity("product factors must be one-dimensional".into()));
        }
        let lo = factors.iter().map(|f| f.support_lo[0]).collect();
        let hi = factors.iter().map(|f| f.support_hi[0]).collect();
        let inside: f64 = factors.iter().map(|f| 1.0 - f.tail_mass).product();
        Ok(Self {
            kind: DensityKind::Product { factors },
            support_lo: lo,
            support_hi: hi,
            tail_mass: (1.0 - inside).max(0.0),
        })
    }

    /// `exp(-sum_k lambda_k f(x_k)) base / Z` for a centered diagonal Gaussian base.
    pub fn bv_perturbed(base: DensitySpec, f: BvFunction, weights: Vec<f64>) -> Result<Self> {
        let DensityKind::Gaussian { mean, var } = &base.kind else {
            return Err(Error::InvalidDensity("perturbation base must be Gaussian".into()));
        };
        if weights.len() != var.len() || weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::InvalidDensity("one nonnegative weight per coordinate required".into()));
        }
        if mean.iter().any(|m| *m != 0.0) {
            return Err(Error::InvalidDensity("perturbation base must be centered".into()));
        }
        let z: f64 = weights.iter().zip(var).map(|(&l, &v)| gaussian_boltzmann_factor(&f, l, v)).product();
        let (lo, hi) = (base.support_lo.clone(), base.support_hi.clone());
        // the factor exp(-Q) is within [e^{-L}, e^{L}], L = sum lambda ||f||
        let spread = (2.0 * weights.iter().sum::<f64>() * f.sup_norm()).exp();
        let tail = (base.tail_mass * spread).min(1.0);
        Ok(Self {
            kind: DensityKind::BvPerturbed { base: Box::new(base), f, weights, normalization: z },
            support_lo: lo,
            support_hi: hi,
            tail_mass: tail,
        })
    }

    /// Uniform density on the box `[lo, hi)`.
    pub fn uniform(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        let d = lo.len();
        let vol: f64 = lo.iter().zip(&hi).map(|(a, b)| b - a).product();
        Self::tabulated(lo, hi, vec![1; d], vec![1.0 / vol])
    }

    /// Piecewise-constant density on a regular grid of cells (last axis fastest).
    pub fn tabulated(lo: Vec<f64>, hi: Vec<f64>, shape: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        let d = lo.len();
        if d == 0 || hi.len() != d || shape.len() != d {
            return Err(Error::InvalidDensity("table dimensions disagree".into()));
        }
        if lo.iter().zip(&hi).any(|(a, b)| !(a < b)) || shape.contains(&0) {
            return Err(Error::InvalidDensity("empty table".into()));
        }
        if values.len() != shape.iter().product::<usize>() || values.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::InvalidDensity("table needs one nonnegative value per cell".into()));
        }
        Ok(Self {
            kind: DensityKind::Tabulated {
                lo: lo.clone(),
                hi: hi.clone(),
                shape,
                values,
                rule: Interpolation::PiecewiseConstant,
            },
            support_lo: lo,
            support_hi: hi,
            tail_mass: 0.0,
        })
    }

    pub fn dim(&self) -> usize {
        self.support_lo.len()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match &self.kind {
            DensityKind::Gaussian { mean, var } => {
                let mut q = 0.0;
                let mut norm = 1.0;
                for k in 0..mean.len() {
                    let z = x[k] - mean[k];
                    q += z * z / var[k];
                    norm *= 2.0 * std::f64::consts::PI * var[k];
                }
                (-0.5 * q).exp() / norm.sqrt()
            }
            DensityKind::Product { factors } => {
                factors.iter().enumerate().map(|(k, f)| f.eval(&x[k..k + 1])).product()
            }
            DensityKind::BvPerturbed { base, f, weights, normalization } => {
                let q: f64 = weights.iter().zip(x).map(|(l, &xi)| l * f.eval(xi)).sum();
                (-q).exp() * base.eval(x) / normalization
            }
            DensityKind::Tabulated { lo, hi, shape, values, .. } => {
                let mut idx = 0usize;
                for k in 0..lo.len() {
                    if !(x[k] >= lo[k] && x[k] < hi[k]) {
                        return 0.0;
                    }
                    let h = (hi[k] - lo[k]) / shape[k] as f64;
                    let i = (((x[k] - lo[k]) / h).floor() as usize).min(shape[k] - 1);
                    idx = idx * shape[k] + i;
                }
                values[idx]
            }
        }
    }

    pub fn axis_breakpoints(&self, axis: usize) -> Vec<f64> {
        match &self.kind {
            DensityKind::Gaussian { .. } => Vec::new(),
            DensityKind::Product { factors } => factors[axis].axis_breakpoints(0),
            DensityKind::BvPerturbed { base, f, weights, .. } => {
                let mut b = base.axis_breakpoints(axis);
                if weights[axis] != 0.0 {
                    b.extend_from_slice(f.breakpoints());
                }
                b.sort_by(f64::total_cmp);
                b.dedup();
                b
            }
            DensityKind::Tabulated { lo, hi, shape, .. } => {
                let h = (hi[axis] - lo[axis]) / shape[axis] as f64;
                (0..=shape[axis]).map(|i| lo[axis] + i as f64 * h).collect()
            }
        }
    }

    /// Marginal-product factor `k` if this density is a product or diagonal Gaussian.
    pub fn factor(&self, k: usize) -> Option<DensitySpec> {
        match &self.kind {
            DensityKind::Product { factors } => factors.get(k).cloned(),
            DensityKind::Gaussian { mean, var } => DensitySpec::gaussian_on_box(
                vec![mean[k]],
                vec![var[k]],
                vec![self.support_lo[k]],
                vec![self.support_hi[k]],
            )
            .ok(),
            _ => None,
        }
    }

    /// `int_{D_T} rho dx`, see [`cell_integral_of`].
    pub fn cell_integral(&self, t: &PathSimplex, opts: &CellQuadOptions) -> Result<f64> {
        cell_integral_of(self, t, |_| 1.0, opts)
    }

    /// Hamza-type sanity: positive on every quadrature point of cells inside the box.
    pub fn check_positive_interior(&self, grid: &GridSpec) -> std::result::Result<(), PathSimplex> {
        let rule = SimplexRule::new(grid.d, 2);
        for t in grid.cells() {
            let interior = t.vertices().iter().all(|v| {
                v.iter().enumerate().all(|(k, &a)| {
                    let x = a as f64 * grid.r;
                    x >= self.support_lo[k] && x <= self.support_hi[k]
                })
            });
            if interior && rule.map(&t).any(|(x, _)| !(self.eval(&x) > 0.0)) {
                return Err(t);
            }
        }
        Ok(())
    }
}

impl Density for DensitySpec {
    fn dim(&self) -> usize {
        DensitySpec::dim(self)
    }
    fn eval(&self, x: &[f64]) -> f64 {
        DensitySpec::eval(self, x)
    }
    fn support_box(&self) -> (Vec<f64>, Vec<f64>) {
        (self.support_lo.clone(), self.support_hi.clone())
    }
    fn axis_breakpoints(&self, axis: usize) -> Vec<f64> {
        DensitySpec::axis_breakpoints(self, axis)
    }
}

/// Density given by a closure, e.g. a smooth reweighting of a base measure.
pub struct FnDensity<F: Fn(&[f64]) -> f64 + Sync> {
    pub f: F,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub breaks: Vec<Vec<f64>>,
}

impl<F: Fn(&[f64]) -> f64 + Sync> Density for FnDensity<F> {
    fn dim(&self) -> usize {
        self.lo.len()
    }
    fn eval(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }
    fn support_box(&self) -> (Vec<f64>, Vec<f64>) {
        (self.lo.clone(), self.hi.clone())
    }
    fn axis_breakpoints(&self, axis: usize) -> Vec<f64> {
        self.breaks.get(axis).cloned().unwrap_or_default()
    }
}

/// Quadrature points on a cell adapted to the density: one-dimensional cells are
/// split at interior breakpoints so each piece is smooth.
pub fn density_cell_rule<D: Density + ?Sized>(rho: &D, t: &PathSimplex, order: usize) -> Vec<(Vec<f64>, f64)> {
    if t.dim() == 1 {
        let a = t.anchor[0] as f64 * t.r;
        let b = a + t.r;
        let mut cuts = vec![a];
        cuts.extend(rho.axis_breakpoints(0).into_iter().filter(|&c| c > a && c < b));
        cuts.push(b);
        let (x, w) = gauss_legendre01(order);
        let mut out = Vec::with_capacity(order * (cuts.len() - 1));
        for seg in cuts.windows(2) {
            let h = seg[1] - seg[0];
            for (xi, wi) in x.iter().zip(&w) {
                out.push((vec![seg[0] + h * xi], wi * h));
            }
        }
        out
    } else {
        SimplexRule::new(t.dim(), order).map(t).collect()
    }
}

/// `int_{D_T} g rho dx` with two consecutive orders compared; on disagreement the
/// cell is refined, and persistent disagreement is an error.
pub fn cell_integral_of<D: Density + ?Sized, G: Fn(&[f64]) -> f64>(
    rho: &D,
    t: &PathSimplex,
    g: G,
    opts: &CellQuadOptions,
) -> Result<f64> {
    let f = |x: &[f64]| g(x) * rho.eval(x);
    let a: f64 = density_cell_rule(rho, t, opts.order).iter().map(|(x, w)| w * f(x)).sum();
    let b: f64 = density_cell_rule(rho, t, opts.order + 1).iter().map(|(x, w)| w * f(x)).sum();
    if (a - b).abs() <= (opts.rel_tol * b.abs()).max(opts.abs_tol) {
        return Ok(b);
    }
    if t.dim() == 1 {
        return Err(Error::Quadrature(format!(
            "interval at {:?} r={}: {a:e} vs {b:e}",
            t.anchor, t.r
        )));
    }
    integrate_cell(&f, t, opts)
}

/// Nonnegative cutoff weight `kappa` with values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Cutoff {
    One,
    Zero,
    Constant { value: f64 },
    /// Indicator of the closed box `[lo, hi]`.
    Box { lo: Vec<f64>, hi: Vec<f64> },
}

impl Cutoff {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Cutoff::One => 1.0,
            Cutoff::Zero => 0.0,
            Cutoff::Constant { value } => value.clamp(0.0, 1.0),
            Cutoff::Box { lo, hi } => {
                let inside = x.iter().enumerate().all(|(k, &v)| v >= lo[k] && v <= hi[k]);
                if inside {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Cutoff::Zero) || matches!(self, Cutoff::Constant { value } if *value <= 0.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxConfig {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

/// Declarative form of a density, as read from a JSON config.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DensityConfig {
    Gaussian {
        mean: Vec<f64>,
        var: Vec<f64>,
        #[serde(default, rename = "box")]
        support: Option<BoxConfig>,
    },
    Uniform {
        lo: Vec<f64>,
        hi: Vec<f64>,
    },
    Product {
        factors: Vec<DensityConfig>,
    },
    BvPerturbed {
        base: Box<DensityConfig>,
        f: BvFunction,
        weights: Vec<f64>,
    },
    Tabulated {
        lo: Vec<f64>,
        hi: Vec<f64>,
        shape: Vec<usize>,
        values: Vec<f64>,
    },
}

impl DensityConfig {
    pub fn build(&self) -> Result<DensitySpec> {
        match self {
            DensityConfig::Gaussian { mean, var, support: None } => DensitySpec::gaussian(mean.clone(), var.clone()),
            DensityConfig::Gaussian { mean, var, support: Some(b) } => {
                DensitySpec::gaussian_on_box(mean.clone(), var.clone(), b.lo.clone(), b.hi.clone())
            }
            DensityConfig::Uniform { lo, hi } => DensitySpec::uniform(lo.clone(), hi.clone()),
            DensityConfig::Product { factors } => {
                DensitySpec::product(factors.iter().map(|f| f.build()).collect::<Result<Vec<_>>>()?)
            }
            DensityConfig::BvPerturbed { base, f, weights } => {
                DensitySpec::bv_perturbed(base.build()?, f.clone(), weights.clone())
            }
            DensityConfig::Tabulated { lo, hi, shape, values } => {
                DensitySpec::tabulated(lo.clone(), hi.clone(), shape.clone(), values.clone())
            }
        }
    }
}
