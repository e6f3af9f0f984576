//! Galerkin discretization of `E(u, v) = int <grad u, grad v> rho dx` on the tent basis.

pub mod sparse;
pub mod spectral;

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::{density_cell_rule, Density};
use crate::error::{Error, Result};
use crate::tent::{grad_dot, h_local};
use crate::triangulation::{GridSpec, LatticePoint, PathSimplex};
use sparse::{conjugate_gradient, CsrMatrix, SkylineCholesky};

/// Cells with less mass than this are left out of the assembly.
pub const CELL_MASS_FLOOR: f64 = 1e-300;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssemblyOptions {
    pub order: usize,
    pub rel_tol: f64,
    pub max_depth: usize,
    /// Replace the mass matrix by its row sums.
    pub lumped: bool,
}

impl Default for AssemblyOptions {
    fn default() -> Self {
        Self { order: 4, rel_tol: 1e-8, max_depth: 4, lumped: false }
    }
}

#[derive(Clone, Debug)]
pub struct FormMatrices {
    pub stiffness: CsrMatrix,
    pub mass: CsrMatrix,
    /// Row `k` belongs to lattice point `nodes[k]`; lexicographic order.
    pub nodes: Vec<LatticePoint>,
    pub index: BTreeMap<LatticePoint, usize>,
    pub grid: GridSpec,
    pub lumped: bool,
    pub dropped_cells: usize,
}

/// Local mass matrix `int_sub H_i H_j rho` for the barycentric functions of `parent`.
fn local_mass<D: Density + ?Sized>(rho: &D, parent: &PathSimplex, sub: &PathSimplex, order: usize) -> Vec<f64> {
    let d = parent.dim();
    let p = parent.perm.axes();
    let mut out = vec![0.0; (d + 1) * (d + 1)];
    let mut h = vec![0.0; d + 1];
    for (x, w) in density_cell_rule(rho, sub, order) {
        let rw = w * rho.eval(&x);
        if rw == 0.0 {
            continue;
        }
        let xl = parent.local_coords(&x);
        for (i, hi) in h.iter_mut().enumerate() {
            *hi = h_local(p, i, &xl);
        }
        for i in 0..=d {
            for j in 0..=d {
                out[i * (d + 1) + j] += rw * h[i] * h[j];
            }
        }
    }
    out
}

fn adaptive_local_mass<D: Density + ?Sized>(
    rho: &D,
    parent: &PathSimplex,
    sub: &PathSimplex,
    opts: &AssemblyOptions,
    budget: Option<f64>,
    depth: usize,
) -> Result<Vec<f64>> {
    let a = local_mass(rho, parent, sub, opts.order);
    let b = local_mass(rho, parent, sub, opts.order + 1);
    let total: f64 = b.iter().sum();
    let budget = budget.unwrap_or(opts.rel_tol * total.abs()).max(1e-300);
    let gap = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    if gap <= budget {
        return Ok(b);
    }
    if depth >= opts.max_depth {
        return Err(Error::Quadrature(format!(
            "mass moments on cell {:?}/{:?} r={} disagree by {gap:e}",
            sub.anchor,
            sub.perm.to_one_based(),
            sub.r
        )));
    }
    let kids = sub.children();
    let share = budget / kids.len() as f64;
    let mut acc = vec![0.0; b.len()];
    for c in &kids {
        let m = adaptive_local_mass(rho, parent, c, opts, Some(share), depth + 1)?;
        for (s, v) in acc.iter_mut().zip(m) {
            *s += v;
        }
    }
    Ok(acc)
}

/// Stiffness `S[a,b] = sum_T grad_dot(i_a, i_b) m(D_T)` and mass `M[a,b] = int chi_a chi_b rho`.
pub fn assemble<D: Density + ?Sized>(grid: &GridSpec, rho: &D, opts: &AssemblyOptions) -> Result<FormMatrices> {
    let d = grid.d;
    let r = grid.r;
    let mut gd = vec![0.0; (d + 1) * (d + 1)];
    for i in 0..=d {
        for j in 0..=d {
            gd[i * (d + 1) + j] = grad_dot(d, r, i, j)?;
        }
    }
    let cells = grid.cells();
    let locals: Vec<Result<Option<(PathSimplex, Vec<f64>)>>> = cells
        .into_par_iter()
        .map(|t| {
            let m = adaptive_local_mass(rho, &t, &t, opts, None, 0)?;
            let mass: f64 = m.iter().sum();
            Ok((mass >= CELL_MASS_FLOOR).then_some((t, m)))
        })
        .collect();
    let mut kept = Vec::new();
    let mut dropped = 0;
    for l in locals {
        match l? {
            Some(x) => kept.push(x),
            None => dropped += 1,
        }
    }
    if kept.is_empty() {
        return Err(Error::InvalidDensity("no cell of the grid carries mass".into()));
    }
    let mut index: BTreeMap<LatticePoint, usize> = BTreeMap::new();
    for (t, _) in &kept {
        for v in t.vertices() {
            index.insert(v, 0);
        }
    }
    let nodes: Vec<LatticePoint> = index.keys().cloned().collect();
    for (k, v) in index.values_mut().enumerate() {
        *v = k;
    }
    let mut s_map: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    let mut m_map: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for (t, m) in &kept {
        let ids: Vec<usize> = t.vertices().iter().map(|v| index[v]).collect();
        let mass: f64 = m.iter().sum();
        for i in 0..=d {
            for j in 0..=d {
                let key = (ids[i], ids[j]);
                let g = gd[i * (d + 1) + j];
                if g != 0.0 {
                    *s_map.entry(key).or_insert(0.0) += g * mass;
                }
                *m_map.entry(key).or_insert(0.0) += m[i * (d + 1) + j];
            }
        }
    }
    let n = nodes.len();
    let stiffness = CsrMatrix::from_map(n, &s_map);
    let mut mass = CsrMatrix::from_map(n, &m_map);
    if opts.lumped {
        mass = CsrMatrix::diagonal(&mass.row_sums());
    }
    Ok(FormMatrices { stiffness, mass, nodes, index, grid: grid.clone(), lumped: opts.lumped, dropped_cells: dropped })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    #[default]
    Cholesky,
    Cg,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResolventSolve {
    pub alpha: f64,
    pub f: Vec<f64>,
    pub u: Vec<f64>,
    /// Backward error of the solve, see [`ShiftedOperator::solve_rhs`].
    pub residual: f64,
}

const REFINE_STEPS: usize = 3;
pub const SOLVE_TOL: f64 = 1e-10;

/// `alpha M + S`, factored once for repeated solves.
pub struct ShiftedOperator<'a> {
    forms: &'a FormMatrices,
    pub alpha: f64,
    a: CsrMatrix,
    inv_sqrt_diag: Vec<f64>,
    factor: Option<SkylineCholesky>,
}

impl<'a> ShiftedOperator<'a> {
    pub fn new(forms: &'a FormMatrices, alpha: f64, solver: SolverKind) -> Result<Self> {
        Self::with_scaling(forms, alpha, 1.0, solver)
    }

    /// `alpha M + beta S`.
    fn with_scaling(forms: &'a FormMatrices, alpha: f64, beta: f64, solver: SolverKind) -> Result<Self> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(Error::InvalidArgument(format!("alpha must be positive, got {alpha}")));
        }
        let a = CsrMatrix::linear_combination(alpha, &forms.mass, beta, &forms.stiffness)?;
        let factor = match solver {
            SolverKind::Cholesky => Some(SkylineCholesky::factor(&a)?),
            SolverKind::Cg => None,
        };
        let inv_sqrt_diag = (0..a.n).map(|i| 1.0 / a.get(i, i).sqrt()).collect();
        Ok(Self { forms, alpha, a, inv_sqrt_diag, factor })
    }

    /// Solves `A u = b` to backward error `SOLVE_TOL`, with iterative refinement.
    ///
    /// The residual is the normwise backward error `|r| / | |A||u| + |b| |` after Jacobi
    /// scaling. On fine cells of a narrow Gaussian the stiffness rows cancel to round-off
    /// of size `eps |S||u|`, which `|b|` alone would not absorb.
    pub fn solve_rhs(&self, b: &[f64]) -> Result<(Vec<f64>, f64)> {
        if b.iter().all(|v| *v == 0.0) {
            return Ok((vec![0.0; b.len()], 0.0));
        }
        let mut u = match &self.factor {
            Some(f) => f.solve(b),
            None => conjugate_gradient(&self.a, b, SOLVE_TOL * 0.1, 20 * b.len() + 100)?.0,
        };
        let mut rel = self.backward_error(&u, b);
        if let Some(f) = &self.factor {
            for _ in 0..REFINE_STEPS {
                if rel <= SOLVE_TOL {
                    break;
                }
                let corr = f.solve(&res_vec(&self.a, &u, b));
                for (x, c) in u.iter_mut().zip(corr) {
                    *x += c;
                }
                rel = self.backward_error(&u, b);
            }
        }
        if rel > SOLVE_TOL {
            let cond = self.factor.as_ref().map(|f| f.pivot_ratio()).unwrap_or(f64::NAN);
            return Err(Error::Solver(format!("backward error {rel:e} above {SOLVE_TOL:e}; pivot ratio {cond:e}")));
        }
        Ok((u, rel))
    }

    fn backward_error(&self, u: &[f64], b: &[f64]) -> f64 {
        let r = res_vec(&self.a, u, b);
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..b.len() {
            let s = self.inv_sqrt_diag[i];
            let abs_au: f64 = self.a.row(i).map(|(j, v)| (v * u[j]).abs()).sum();
            num += (s * r[i]).powi(2);
            den += (s * (abs_au + b[i].abs())).powi(2);
        }
        (num / den).sqrt()
    }

    /// `G_alpha f`, the solution of `(alpha M + S) u = M f`.
    pub fn resolvent(&self, f: &[f64]) -> Result<ResolventSolve> {
        let b = self.forms.mass.mul_vec(f);
        let (u, residual) = self.solve_rhs(&b)?;
        Ok(ResolventSolve { alpha: self.alpha, f: f.to_vec(), u, residual })
    }
}

fn res_vec(a: &CsrMatrix, u: &[f64], b: &[f64]) -> Vec<f64> {
    a.mul_vec(u).iter().zip(b).map(|(x, y)| y - x).collect()
}



impl FormMatrices {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn coords(&self, k: usize) -> Vec<f64> {
        self.grid.coords(&self.nodes[k])
    }

    /// Nodal values of `f`.
    pub fn interpolate(&self, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
        (0..self.len()).map(|k| f(&self.coords(k))).collect()
    }

    pub fn energy(&self, u: &[f64], v: &[f64]) -> f64 {
        self.stiffness.bilinear(u, v)
    }

    pub fn l2_inner(&self, u: &[f64], v: &[f64]) -> f64 {
        self.mass.bilinear(u, v)
    }

    pub fn l2_norm(&self, u: &[f64]) -> f64 {
        self.l2_inner(u, u).max(0.0).sqrt()
    }

    pub fn total_mass(&self) -> f64 {
        let one = vec![1.0; self.len()];
        self.l2_inner(&one, &one)
    }

    pub fn resolvent(&self, alpha: f64, f: &[f64]) -> Result<ResolventSolve> {
        ShiftedOperator::new(self, alpha, SolverKind::Cholesky)?.resolvent(f)
    }

    /// Implicit Euler with `steps` and `2 steps` steps.
    pub fn semigroup(&self, t: f64, f: &[f64], steps: usize) -> Result<SemigroupResult> {
        if !(t > 0.0) || steps == 0 {
            return Err(Error::InvalidArgument(format!("need t > 0 and steps >= 1, got t={t}, steps={steps}")));
        }
        let run = |n: usize| -> Result<Vec<f64>> {
            let tau = t / n as f64;
            // (M + tau S) u_{k+1} = M u_k, scaled by 1/tau
            let op = ShiftedOperator::with_scaling(self, 1.0, tau, SolverKind::Cholesky)?;
            let mut u = f.to_vec();
            for _ in 0..n {
                let b = self.mass.mul_vec(&u);
                u = op.solve_rhs(&b)?.0;
            }
            Ok(u)
        };
        let coarse = run(steps)?;
        let fine = run(2 * steps)?;
        let extrapolated: Vec<f64> = coarse.iter().zip(&fine).map(|(a, b)| 2.0 * b - a).collect();
        let diff: Vec<f64> = coarse.iter().zip(&fine).map(|(a, b)| b - a).collect();
        Ok(SemigroupResult { t, steps, values: coarse, refined: fine, extrapolated, error_estimate: self.l2_norm(&diff) })
    }

    /// Random `[0,1]`-valued inputs through `alpha G_alpha`, checking the range.
    pub fn markov_check(&self, alpha: f64, trials: usize, seed: u64) -> Result<MarkovReport> {
        let op = ShiftedOperator::new(self, alpha, SolverKind::Cholesky)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut report = MarkovReport { alpha, trials, tolerance: MARKOV_TOL, violations: 0, min: f64::INFINITY, max: f64::NEG_INFINITY, offending: None };
        for _ in 0..trials {
            let f: Vec<f64> = (0..self.len()).map(|_| rng.gen::<f64>()).collect();
            let u = op.resolvent(&f)?.u;
            let mut bad = false;
            for v in u.iter().map(|x| alpha * x) {
                report.min = report.min.min(v);
                report.max = report.max.max(v);
                bad |= v < -MARKOV_TOL || v > 1.0 + MARKOV_TOL;
            }
            if bad {
                report.violations += 1;
                if report.offending.is_none() {
                    report.offending = Some(f);
                }
            }
        }
        Ok(report)
    }
}

pub const MARKOV_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub alpha: f64,
    pub nodes: usize,
    /// `|quadrature - alpha G_alpha f|_M / |alpha G_alpha f|_M`.
    pub relative_error: f64,
}

impl FormMatrices {
    /// Compares `alpha int_0^inf e^{-alpha t} T_t f dt` (Gauss-Laguerre in `t`, exact
    /// spectral `T_t`) with `alpha G_alpha f` from the sparse solve.
    pub fn resolvent_semigroup_consistency(&self, alpha: f64, f: &[f64], nodes: usize) -> Result<ConsistencyReport> {
        let eig = spectral::GeneralizedEigen::new(&self.stiffness, &self.mass)?;
        let (s, w) = spectral::gauss_laguerre(nodes);
        let mut acc = vec![0.0; f.len()];
        for (sk, wk) in s.iter().zip(&w) {
            let tf = eig.semigroup(sk / alpha, f);
            for (a, v) in acc.iter_mut().zip(tf) {
                *a += wk * v;
            }
        }
        let g: Vec<f64> = self.resolvent(alpha, f)?.u.iter().map(|v| alpha * v).collect();
        let diff: Vec<f64> = acc.iter().zip(&g).map(|(a, b)| a - b).collect();
        Ok(ConsistencyReport { alpha, nodes, relative_error: self.l2_norm(&diff) / self.l2_norm(&g) })
    }

    /// Rows `node,coordinate...,value` for a nodal vector.
    pub fn nodal_csv(&self, values: &[f64]) -> String {
        let d = self.grid.d;
        let mut out = String::from("node");
        for i in 0..d {
            out.push_str(&format!(",x{}", i + 1));
        }
        out.push_str(",value\n");
        for (k, v) in values.iter().enumerate() {
            out.push_str(&k.to_string());
            for c in self.coords(k) {
                out.push_str(&format!(",{c:.17e}"));
            }
            out.push_str(&format!(",{v:.17e}\n"));
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SemigroupResult {
    pub t: f64,
    pub steps: usize,
    pub values: Vec<f64>,
    pub refined: Vec<f64>,
    /// `2 u_{2n} - u_n`.
    pub extrapolated: Vec<f64>,
    /// `|u_{2n} - u_n|_M`.
    pub error_estimate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarkovReport {
    pub alpha: f64,
    pub trials: usize,
    pub tolerance: f64,
    pub violations: usize,
    pub min: f64,
    pub max: f64,
    pub offending: Option<Vec<f64>>,
}

impl MarkovReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}
