//! Residual and perturbation functionals of a nonnegative function over the r-lattice,
//! and the catalog estimators of their dual norms.
//!
//! For a pair `(phi, eta)` of primal functions:
//!
//! ```text
//! I(g)(x) = sum_a phi_r^a(x) r^{-d} int eta_r^a(y) g(y) dy
//! R(g)(x) = sum_a phi_r^a(x) r^{-d} int |g(x) - g(y)| eta_r^a(y) dy
//! ```
//!
//! `delta = (int R(kappa rho)^2 / rho)^{1/2}` and `C = sup I(kappa rho) / rho`, maximized
//! over the catalog pairs. Both are lower bounds for the suprema over all primal functions.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{density_cell_rule, Cutoff, Density, DENSITY_FLOOR};
use crate::error::{Error, Result};
use crate::tent::PrimalFunction;
use crate::triangulation::{multi_range, GridSpec, LatticePoint, PathSimplex};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PrimalPair {
    pub phi: PrimalFunction,
    pub eta: PrimalFunction,
}

impl PrimalPair {
    pub fn new(phi: PrimalFunction, eta: PrimalFunction) -> Self {
        Self { phi, eta }
    }

    pub fn id(&self) -> String {
        format!("{}|{}", self.phi.label(), self.eta.label())
    }
}

/// Every ordered pair of catalog members.
pub fn catalog_pairs(d: usize) -> Vec<PrimalPair> {
    let cat = PrimalFunction::catalog(d);
    let mut out = Vec::with_capacity(cat.len() * cat.len());
    for &phi in &cat {
        for &eta in &cat {
            out.push(PrimalPair::new(phi, eta));
        }
    }
    out
}

/// The pairs used by the projection bounds: cube/tent, the axis pairs, and the
/// shifted-cube/cube pair of the perturbation argument.
pub fn proof_pairs(d: usize) -> Vec<PrimalPair> {
    let mut out = vec![PrimalPair::new(PrimalFunction::UnitCube, PrimalFunction::Tent)];
    for axis in 0..d {
        out.push(PrimalPair::new(
            PrimalFunction::AxisAveraged { axis },
            PrimalFunction::SimplexUnion { axis },
        ));
    }
    out.push(PrimalPair::new(PrimalFunction::ShiftedCube, PrimalFunction::UnitCube));
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualOptions {
    pub inner_order: usize,
    /// Dyadic refinements of each inner cell.
    pub inner_refine: usize,
    pub outer_order: usize,
    pub outer_refine: usize,
    pub floor: f64,
}

impl Default for ResidualOptions {
    fn default() -> Self {
        Self { inner_order: 6, inner_refine: 2, outer_order: 4, outer_refine: 0, floor: DENSITY_FLOOR }
    }
}

impl ResidualOptions {
    /// Cheaper inner rules for `d >= 2`.
    pub fn for_dim(d: usize) -> Self {
        if d == 1 {
            Self::default()
        } else {
            Self { inner_order: 4, inner_refine: 0, outer_order: 3, ..Self::default() }
        }
    }
}

/// `kappa * rho`, truncated to the support box of `rho`.
pub struct CutoffDensity<'a, D: Density + ?Sized> {
    pub rho: &'a D,
    pub kappa: &'a Cutoff,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl<'a, D: Density + ?Sized> CutoffDensity<'a, D> {
    pub fn new(rho: &'a D, kappa: &'a Cutoff) -> Self {
        let (lo, hi) = rho.support_box();
        Self { rho, kappa, lo, hi }
    }
}

impl<D: Density + ?Sized> Density for CutoffDensity<'_, D> {
    fn dim(&self) -> usize {
        self.rho.dim()
    }
    fn eval(&self, x: &[f64]) -> f64 {
        if x.iter().enumerate().any(|(k, &v)| v < self.lo[k] || v > self.hi[k]) {
            return 0.0;
        }
        let k = self.kappa.eval(x);
        if k == 0.0 {
            0.0
        } else {
            k * self.rho.eval(x)
        }
    }
    fn support_box(&self) -> (Vec<f64>, Vec<f64>) {
        (self.lo.clone(), self.hi.clone())
    }
    fn axis_breakpoints(&self, axis: usize) -> Vec<f64> {
        let mut b = self.rho.axis_breakpoints(axis);
        b.push(self.lo[axis]);
        b.push(self.hi[axis]);
        if let Cutoff::Box { lo, hi } = self.kappa {
            b.push(lo[axis]);
            b.push(hi[axis]);
        }
        b.sort_by(f64::total_cmp);
        b.dedup();
        b
    }
}

fn refine(t: PathSimplex, levels: usize) -> Vec<PathSimplex> {
    let mut cur = vec![t];
    for _ in 0..levels {
        cur = cur.iter().flat_map(|c| c.children()).collect();
    }
    cur
}

fn cell_meets_box(t: &PathSimplex, lo: &[f64], hi: &[f64]) -> bool {
    (0..t.dim()).all(|k| {
        let a = t.anchor[k] as f64 * t.r;
        a + t.r >= lo[k] && a <= hi[k]
    })
}

struct Block {
    start: usize,
    end: usize,
    mean: f64,
    /// Inner weight carried by points where `g` vanishes identically.
    zero_mass: f64,
}

/// Precomputed inner integrals `r^{-d} int eta_r^a g` for every lattice index near the
/// support of `g`.
pub struct LocalAverages {
    pub d: usize,
    pub r: f64,
    pub pair: PrimalPair,
    alpha_lo: Vec<i64>,
    alpha_hi: Vec<i64>,
    blocks: Vec<Block>,
    weights: Vec<f64>,
    values: Vec<f64>,
}

impl LocalAverages {
    pub fn new<G: Density + ?Sized>(g: &G, pair: PrimalPair, r: f64, opts: &ResidualOptions) -> Result<Self> {
        let d = g.dim();
        if !(r > 0.0) {
            return Err(Error::InvalidArgument(format!("mesh size must be positive, got {r}")));
        }
        let (lo, hi) = g.support_box();
        let alpha_lo: Vec<i64> = lo.iter().map(|&v| (v / r).floor() as i64 - 3).collect();
        let alpha_hi: Vec<i64> = hi.iter().map(|&v| (v / r).ceil() as i64 + 3).collect();
        let unit_cells = pair.eta.support_cells(d);
        let scale = r.powi(-(d as i32));
        let alphas = multi_range(&alpha_lo, &alpha_hi);
        let per_alpha: Vec<(Vec<f64>, Vec<f64>)> = alphas
            .par_iter()
            .map(|alpha| {
                let mut w = Vec::new();
                let mut v = Vec::new();
                for uc in &unit_cells {
                    let anchor: LatticePoint = uc.anchor.iter().zip(alpha).map(|(a, b)| a + b).collect();
                    let t = PathSimplex::new(anchor, uc.perm.clone(), r);
                    if !cell_meets_box(&t, &lo, &hi) {
                        continue;
                    }
                    for c in refine(t, opts.inner_refine) {
                        for (y, wq) in density_cell_rule(g, &c, opts.inner_order) {
                            let e = pair.eta.eval_scaled(alpha, r, &y);
                            if e == 0.0 {
                                continue;
                            }
                            let gy = g.eval(&y);
                            if gy == 0.0 {
                                continue;
                            }
                            w.push(scale * wq * e);
                            v.push(gy);
                        }
                    }
                }
                (w, v)
            })
            .collect();
        let mut blocks = Vec::with_capacity(per_alpha.len());
        let mut weights = Vec::new();
        let mut values = Vec::new();
        for (w, v) in per_alpha {
            let start = weights.len();
            let mass: f64 = w.iter().sum();
            let mean = w.iter().zip(&v).map(|(a, b)| a * b).sum();
            weights.extend(w);
            values.extend(v);
            blocks.push(Block { start, end: weights.len(), mean, zero_mass: (1.0 - mass).max(0.0) });
        }
        Ok(Self { d, r, pair, alpha_lo, alpha_hi, blocks, weights, values })
    }

    fn block_index(&self, alpha: &[i64]) -> Option<usize> {
        let mut idx = 0usize;
        for k in 0..self.d {
            if alpha[k] < self.alpha_lo[k] || alpha[k] > self.alpha_hi[k] {
                return None;
            }
            let n = (self.alpha_hi[k] - self.alpha_lo[k] + 1) as usize;
            idx = idx * n + (alpha[k] - self.alpha_lo[k]) as usize;
        }
        Some(idx)
    }

    /// Calls `f(phi_r^a(x), block)` for each index with `phi_r^a(x) != 0`.
    fn for_each_active(&self, x: &[f64], mut f: impl FnMut(f64, Option<&Block>)) {
        let (plo, phi_hi) = self.pair.phi.support(self.d);
        let lo: Vec<i64> = (0..self.d).map(|k| (x[k] / self.r - phi_hi[k]).ceil() as i64).collect();
        let hi: Vec<i64> = (0..self.d).map(|k| (x[k] / self.r - plo[k]).floor() as i64).collect();
        for alpha in multi_range(&lo, &hi) {
            let p = self.pair.phi.eval_scaled(&alpha, self.r, x);
            if p != 0.0 {
                f(p, self.block_index(&alpha).map(|i| &self.blocks[i]));
            }
        }
    }

    /// `I(g)(x)`.
    pub fn perturbation(&self, x: &[f64]) -> f64 {
        let mut s = 0.0;
        self.for_each_active(x, |p, b| {
            if let Some(b) = b {
                s += p * b.mean;
            }
        });
        s
    }

    /// `R(g)(x)` given `gx = g(x)`.
    pub fn residual(&self, x: &[f64], gx: f64) -> f64 {
        let mut s = 0.0;
        self.for_each_active(x, |p, b| {
            let inner = match b {
                Some(b) => {
                    let w = &self.weights[b.start..b.end];
                    let v = &self.values[b.start..b.end];
                    w.iter().zip(v).map(|(wi, vi)| wi * (gx - vi).abs()).sum::<f64>() + b.zero_mass * gx.abs()
                }
                None => gx.abs(),
            };
            s += p * inner;
        });
        s
    }

    /// `r^d sum_a (mean over a)`, which equals `int g` under the inner rule.
    pub fn total_mass(&self) -> f64 {
        let rd = self.r.powi(self.d as i32);
        self.blocks.iter().map(|b| b.mean).sum::<f64>() * rd
    }
}

/// Pointwise residual of `g` at `x`.
pub fn residual_apply<G: Density + ?Sized>(
    g: &G,
    pair: PrimalPair,
    r: f64,
    x: &[f64],
    opts: &ResidualOptions,
) -> Result<f64> {
    let la = LocalAverages::new(g, pair, r, opts)?;
    Ok(la.residual(x, g.eval(x)))
}

/// Pointwise perturbation of `g` at `x`.
pub fn perturbation_apply<G: Density + ?Sized>(
    g: &G,
    pair: PrimalPair,
    r: f64,
    x: &[f64],
    opts: &ResidualOptions,
) -> Result<f64> {
    let la = LocalAverages::new(g, pair, r, opts)?;
    Ok(la.perturbation(x))
}

/// Outer quadrature points covering every point where `R` or `I` may be nonzero.
fn outer_points<D: Density + ?Sized>(g: &D, r: f64, order: usize, levels: usize) -> Result<Vec<Vec<(Vec<f64>, f64)>>> {
    let (lo, hi) = g.support_box();
    let lo: Vec<f64> = lo.iter().map(|v| v - 3.0 * r).collect();
    let hi: Vec<f64> = hi.iter().map(|v| v + 3.0 * r).collect();
    let grid = GridSpec::covering(r, &lo, &hi)?;
    Ok(grid
        .cells()
        .into_par_iter()
        .map(|t| {
            refine(t, levels)
                .iter()
                .flat_map(|c| density_cell_rule(g, c, order))
                .collect::<Vec<_>>()
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairEstimate {
    pub pair_id: String,
    pub delta: f64,
    pub c: f64,
    /// `C` on the once-refined outer rule.
    pub c_refined: f64,
    /// Set when the two `C` resolutions differ by more than 5%.
    pub c_unstable: bool,
    /// `int R` over points where `rho` is below the floor.
    pub mass_deficit: f64,
    pub int_g: f64,
    pub int_i: f64,
    pub int_r: f64,
    pub runtime_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub r: f64,
    pub delta: f64,
    pub c: f64,
    pub pairs: Vec<PairEstimate>,
}

impl SweepPoint {
    pub fn pair(&self, id: &str) -> Option<&PairEstimate> {
        self.pairs.iter().find(|p| p.pair_id == id)
    }
}

/// Catalog estimates of `delta_r^kappa` and `C_r^kappa` for the density `rho`.
pub fn estimate<D: Density + ?Sized>(
    rho: &D,
    kappa: &Cutoff,
    r: f64,
    pairs: &[PrimalPair],
    opts: &ResidualOptions,
) -> Result<SweepPoint> {
    let g = CutoffDensity::new(rho, kappa);
    let mut out = Vec::with_capacity(pairs.len());
    if kappa.is_zero() {
        for p in pairs {
            out.push(PairEstimate {
                pair_id: p.id(),
                delta: 0.0,
                c: 0.0,
                c_refined: 0.0,
                c_unstable: false,
                mass_deficit: 0.0,
                int_g: 0.0,
                int_i: 0.0,
                int_r: 0.0,
                runtime_ms: 0.0,
            });
        }
        return Ok(SweepPoint { r, delta: 0.0, c: 0.0, pairs: out });
    }
    let pts = outer_points(&g, r, opts.outer_order, opts.outer_refine)?;
    let fine = outer_points(&g, r, opts.outer_order, opts.outer_refine + 1)?;
    let int_g = inner_mass(&g, r, opts)?;
    for p in pairs {
        let start = Instant::now();
        let la = LocalAverages::new(&g, *p, r, opts)?;
        // per-cell partial sums, reduced in cell order for reproducibility
        let parts: Vec<[f64; 5]> = pts
            .par_iter()
            .map(|cell| {
                let mut acc = [0.0; 5];
                for (x, w) in cell {
                    let gx = g.eval(x);
                    let res = la.residual(x, gx);
                    let per = la.perturbation(x);
                    let rho_x = rho.eval(x);
                    acc[2] += w * per;
                    acc[3] += w * res;
                    if rho_x < opts.floor {
                        acc[1] += w * res;
                    } else {
                        acc[0] += w * res * res / rho_x;
                        acc[4] = acc[4].max(per / rho_x);
                    }
                }
                acc
            })
            .collect();
        let mut tot = [0.0; 5];
        for a in &parts {
            for k in 0..4 {
                tot[k] += a[k];
            }
            tot[4] = tot[4].max(a[4]);
        }
        let c_refined = fine
            .par_iter()
            .map(|cell| {
                cell.iter()
                    .filter_map(|(x, _)| {
                        let rho_x = rho.eval(x);
                        (rho_x >= opts.floor).then(|| la.perturbation(x) / rho_x)
                    })
                    .fold(0.0, f64::max)
            })
            .collect::<Vec<_>>()
            .into_iter()
            .fold(0.0, f64::max);
        let c = tot[4].max(c_refined);
        out.push(PairEstimate {
            pair_id: p.id(),
            delta: tot[0].sqrt(),
            c,
            c_refined,
            c_unstable: (tot[4] - c_refined).abs() > 0.05 * c.max(f64::MIN_POSITIVE),
            mass_deficit: tot[1],
            int_g,
            int_i: tot[2],
            int_r: tot[3],
            runtime_ms: start.elapsed().as_secs_f64() * 1e3,
        });
    }
    let delta = out.iter().map(|p| p.delta).fold(0.0, f64::max);
    let c = out.iter().map(|p| p.c).fold(0.0, f64::max);
    Ok(SweepPoint { r, delta, c, pairs: out })
}

/// `int g` with the same inner cells and rule as [`LocalAverages`].
fn inner_mass<G: Density + ?Sized>(g: &G, r: f64, opts: &ResidualOptions) -> Result<f64> {
    let (lo, hi) = g.support_box();
    let grid = GridSpec::covering(r, &lo, &hi)?;
    let parts: Vec<f64> = grid
        .cells()
        .into_par_iter()
        .map(|t| {
            refine(t, opts.inner_refine)
                .iter()
                .flat_map(|c| density_cell_rule(g, c, opts.inner_order))
                .map(|(y, w)| w * g.eval(&y))
                .sum()
        })
        .collect();
    Ok(parts.iter().sum())
}

/// `delta` only, maximized over `pairs`.
pub fn delta_estimate<D: Density + ?Sized>(
    rho: &D,
    kappa: &Cutoff,
    r: f64,
    pairs: &[PrimalPair],
    opts: &ResidualOptions,
) -> Result<f64> {
    Ok(estimate(rho, kappa, r, pairs, opts)?.delta)
}

/// `C` only, maximized over `pairs`.
pub fn c_estimate<D: Density + ?Sized>(
    rho: &D,
    kappa: &Cutoff,
    r: f64,
    pairs: &[PrimalPair],
    opts: &ResidualOptions,
) -> Result<f64> {
    Ok(estimate(rho, kappa, r, pairs, opts)?.c)
}

/// Regularity class of a bounded weight `g` with `c1 <= g <= c2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WeightRegularity {
    /// Euclidean Lipschitz constant of `g`.
    Lipschitz { constant: f64 },
    Increasing,
    Decreasing,
}

/// Base quantities the perturbation bound is built from.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaseDeltas {
    pub delta_r: f64,
    /// `delta_{2r}` of the base measure, needed in the monotone cases.
    pub delta_2r: f64,
}

/// Upper bound for `sqrt(w) * delta_r(g m / w)`, `w = int g dm`, when `g` takes values in
/// `[c1, c2]` and is Lipschitz or coordinatewise monotone.
pub fn mopert_bound(c1: f64, c2: f64, mode: WeightRegularity, d: usize, r: f64, base: BaseDeltas) -> Result<f64> {
    if !(0.0 < c1 && c1 < c2 && c2.is_finite()) {
        return Err(Error::InvalidArgument(format!("need 0 < c1 < c2, got c1={c1}, c2={c2}")));
    }
    let nine_d = 9f64.powi(d as i32);
    let lead = c2 * c2 * (2.0 / c1.powi(3)).sqrt() * base.delta_r;
    let tail = match mode {
        WeightRegularity::Lipschitz { constant } => {
            4.0 * r * c2 * (2.0 * nine_d * d as f64 / c1.powi(3)).sqrt() * constant
        }
        WeightRegularity::Increasing | WeightRegularity::Decreasing => {
            2.0 * c2 * c2 * (nine_d * 2.0 / c1.powi(3) * base.delta_2r).sqrt()
        }
    };
    Ok(lead + tail)
}

/// Bound on `delta_r` of the normalized measure `exp(-lambda f) m / Z` for a BV `f`,
/// obtained by perturbing first with the increasing Jordan part and then with the
/// decreasing one. `deltas[k]` is `delta_{2^k r}` of the base, `k = 0, 1, 2`; `w_up` and
/// `w_down` are the two normalizations `int exp(lambda f2) dm` and
/// `int exp(-lambda f1) d(m')`.
pub fn bv_two_stage_bound(
    f: &super::bv::BvFunction,
    lambda: f64,
    d: usize,
    r: f64,
    deltas: [f64; 3],
    w_up: f64,
    w_down: f64,
) -> Result<f64> {
    let parts = f.jordan_decompose();
    let sup1 = parts.f1.sup_norm();
    let sup2 = parts.f2.sup_norm();
    let (d_r, d_2r) = if lambda * sup2 > 0.0 {
        let c2 = (lambda * sup2).exp();
        let b = |k: usize| {
            mopert_bound(1.0, c2, WeightRegularity::Increasing, d, r, BaseDeltas {
                delta_r: deltas[k],
                delta_2r: deltas[k + 1],
            })
        };
        (b(0)? / w_up.sqrt(), b(1)? / w_up.sqrt())
    } else {
        (deltas[0], deltas[1])
    };
    if lambda * sup1 > 0.0 {
        let c1 = (-lambda * sup1).exp();
        let b = mopert_bound(c1, 1.0, WeightRegularity::Decreasing, d, r, BaseDeltas { delta_r: d_r, delta_2r: d_2r })?;
        Ok(b / w_down.sqrt())
    } else {
        Ok(d_r)
    }
}

/// [`bv_two_stage_bound`] for a centered Gaussian base of variance `var`, with the two
/// normalizations computed in closed form.
pub fn bv_gaussian_bound(f: &super::bv::BvFunction, lambda: f64, var: f64, r: f64, deltas: [f64; 3]) -> Result<f64> {
    use super::bv::gaussian_boltzmann_factor;
    let parts = f.jordan_decompose();
    let w_up = gaussian_boltzmann_factor(&parts.f2, -lambda, var);
    // exp(-lambda (f1 - f2)) = exp(lambda a) exp(-lambda f)
    let w_down = (lambda * parts.a).exp() * gaussian_boltzmann_factor(f, lambda, var) / w_up;
    bv_two_stage_bound(f, lambda, 1, r, deltas, w_up, w_down)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModulusEstimate {
    pub omega: f64,
    /// `sup |g|` on the sample grid.
    pub sup_abs: f64,
    /// `max_i sup |d_i g|` when a gradient was supplied.
    pub grad_bound: Option<f64>,
    pub grid_step: f64,
}

fn sliding(values: &mut [f64], shape: &[usize], axis: usize, k: usize, take_max: bool) {
    let d = shape.len();
    let stride: usize = shape[axis + 1..d].iter().product();
    let n = shape[axis];
    let total: usize = shape.iter().product();
    let mut line = vec![0.0; n];
    for base in 0..total {
        if (base / stride) % n != 0 {
            continue;
        }
        for i in 0..n {
            line[i] = values[base + i * stride];
        }
        for i in 0..n {
            let hi = (i + k).min(n - 1);
            let mut m = line[i];
            for v in &line[i..=hi] {
                m = if take_max { m.max(*v) } else { m.min(*v) };
            }
            values[base + i * stride] = m;
        }
    }
}

/// `sup |g(x) - g(y)|` over `max_j |x_j - y_j| <= 4 eps`, for `g` vanishing outside
/// `[lo, hi]`. Sampled on a grid of `samples_per_window` points per window side, then
/// resampled four times finer around the best window.
pub fn modulus<G: Fn(&[f64]) -> f64 + Sync>(
    g: G,
    lo: &[f64],
    hi: &[f64],
    eps: f64,
    samples_per_window: usize,
    grad: Option<&(dyn Fn(&[f64]) -> Vec<f64> + Sync)>,
) -> ModulusEstimate {
    let d = lo.len();
    let width = 4.0 * eps;
    let k = samples_per_window.max(2);
    let h = width / k as f64;
    let glo: Vec<f64> = lo.iter().map(|v| v - width).collect();
    let shape: Vec<usize> = (0..d).map(|j| ((hi[j] - lo[j] + 2.0 * width) / h).ceil() as usize + 1).collect();
    let idx_hi: Vec<i64> = shape.iter().map(|&n| n as i64 - 1).collect();
    let points = multi_range(&vec![0; d], &idx_hi);
    let pt = |ix: &[i64], origin: &[f64], step: f64| -> Vec<f64> {
        (0..d).map(|j| origin[j] + ix[j] as f64 * step).collect()
    };
    let vals: Vec<f64> = points.par_iter().map(|ix| g(&pt(ix, &glo, h))).collect();
    let mut mx = vals.clone();
    let mut mn = vals.clone();
    for axis in 0..d {
        sliding(&mut mx, &shape, axis, k, true);
        sliding(&mut mn, &shape, axis, k, false);
    }
    let (best, omega) = mx
        .iter()
        .zip(&mn)
        .enumerate()
        .map(|(i, (a, b))| (i, a - b))
        .fold((0, 0.0), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc });
    // finer resampling around the best window
    let origin: Vec<f64> = pt(&points[best], &glo, h).iter().map(|v| v - h).collect();
    let fine = h / 4.0;
    let fk = 4 * k;
    let n_fine = fk + 8 + 1;
    let fpts = multi_range(&vec![0; d], &vec![n_fine as i64 - 1; d]);
    let mut fm: Vec<f64> = fpts.iter().map(|ix| g(&pt(ix, &origin, fine))).collect();
    let mut fmn = fm.clone();
    let fshape = vec![n_fine; d];
    for axis in 0..d {
        sliding(&mut fm, &fshape, axis, fk, true);
        sliding(&mut fmn, &fshape, axis, fk, false);
    }
    let refined = fm.iter().zip(&fmn).map(|(a, b)| a - b).fold(0.0, f64::max);
    let grad_bound = grad.map(|gr| {
        points
            .par_iter()
            .map(|ix| gr(&pt(ix, &glo, h)).iter().fold(0.0f64, |m, v| m.max(v.abs())))
            .reduce(|| 0.0, f64::max)
    });
    let sup_abs = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    ModulusEstimate { omega: omega.max(refined), sup_abs, grad_bound, grid_step: h }
}

/// `delta` and `C` along `r = 1/m` for increasing `m`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeltaSweep {
    pub m_values: Vec<usize>,
    pub points: Vec<SweepPoint>,
    /// Least-squares slope of `ln delta` against `ln r`.
    pub order: Option<f64>,
    /// `delta` never increases from one `m` to the next.
    pub delta_decreasing: bool,
    /// `C` stays below twice its value at the first `m`.
    pub c_bounded: bool,
}

pub fn delta_sweep<D: Density + ?Sized>(
    rho: &D,
    kappa: &Cutoff,
    m_values: &[usize],
    pairs: &[PrimalPair],
    opts: &ResidualOptions,
) -> Result<DeltaSweep> {
    if m_values.is_empty() || m_values.contains(&0) || m_values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("m values must be positive and increasing".into()));
    }
    let points = m_values
        .iter()
        .map(|&m| estimate(rho, kappa, 1.0 / m as f64, pairs, opts))
        .collect::<Result<Vec<_>>>()?;
    let rs: Vec<f64> = points.iter().map(|p| p.r).collect();
    let ds: Vec<f64> = points.iter().map(|p| p.delta).collect();
    let order = crate::mosco::fitted_slope(&rs, &ds);
    let delta_decreasing = ds.windows(2).all(|w| w[1] <= w[0]);
    let c0 = points[0].c;
    let c_bounded = points.iter().all(|p| p.c <= 2.0 * c0);
    Ok(DeltaSweep { m_values: m_values.to_vec(), points, order, delta_decreasing, c_bounded })
}
