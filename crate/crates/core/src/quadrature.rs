//! Gauss rules on intervals, lattice cubes and Kuhn cells.
//!
//! Cell rules use the collapsed (Duffy) map from the unit cube onto the reference
//! cell `1 > y_0 > y_1 > ... > y_{d-1} > 0`: `y_k = t_0 t_1 ... t_k`, with Jacobian
//! `t_0^{d-1} t_1^{d-2} ... t_{d-2}`. The reference coordinate `y_k` is placed on axis
//! `perm.axis(k)`, which is exactly the inequality chain of that cell.

use crate::error::{Error, Result};
use crate::triangulation::{multi_range, PathSimplex};

/// Gauss-Legendre nodes and weights on `[0, 1]`.
pub fn gauss_legendre01(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = (n + 1) / 2;
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, 0.0);
            for j in 0..n {
                let p2 = p1;
                p1 = p0;
                p0 = ((2 * j + 1) as f64 * z * p1 - j as f64 * p2) / (j + 1) as f64;
            }
            dp = n as f64 * (z * p0 - p1) / (z * z - 1.0);
            let dz = p0 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        if n == 1 {
            dp = 1.0;
            z = 0.0;
        }
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        x[i] = 0.5 * (1.0 - z);
        x[n - 1 - i] = 0.5 * (1.0 + z);
        w[i] = 0.5 * wi;
        w[n - 1 - i] = 0.5 * wi;
    }
    (x, w)
}

/// Quadrature on the reference Kuhn cell, stored in reference coordinates `y`.
#[derive(Clone, Debug)]
pub struct SimplexRule {
    pub d: usize,
    pub order: usize,
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl SimplexRule {
    pub fn new(d: usize, order: usize) -> Self {
        let (t, wt) = gauss_legendre01(order);
        let mut points = Vec::new();
        let mut weights = Vec::new();
        let idx = multi_range(&vec![0; d], &vec![order as i64 - 1; d]);
        for ix in idx {
            let mut y = vec![0.0; d];
            let mut prod = 1.0;
            let mut w = 1.0;
            for k in 0..d {
                let tk = t[ix[k] as usize];
                prod *= tk;
                y[k] = prod;
                w *= wt[ix[k] as usize] * tk.powi((d - 1 - k) as i32);
            }
            points.push(y);
            weights.push(w);
        }
        Self { d, order, points, weights }
    }

    /// Physical points and weights for cell `t` (weights sum to its volume).
    pub fn map(&self, t: &PathSimplex) -> impl Iterator<Item = (Vec<f64>, f64)> + '_ {
        let r = t.r;
        let vol = r.powi(self.d as i32);
        let anchor = t.anchor.clone();
        let perm = t.perm.clone();
        self.points.iter().zip(&self.weights).map(move |(y, &w)| {
            let mut x = vec![0.0; y.len()];
            for (k, &yk) in y.iter().enumerate() {
                let a = perm.axis(k);
                x[a] = (anchor[a] as f64 + yk) * r;
            }
            (x, w * vol)
        })
    }

    /// Cell-local coordinates (`x/r - anchor`) of the mapped points.
    pub fn local_points(&self, t: &PathSimplex) -> Vec<Vec<f64>> {
        self.points
            .iter()
            .map(|y| {
                let mut xl = vec![0.0; y.len()];
                for (k, &yk) in y.iter().enumerate() {
                    xl[t.perm.axis(k)] = yk;
                }
                xl
            })
            .collect()
    }
}

/// Tensor Gauss rule on the cube `lo + [0, h)^d`.
pub fn cube_rule(lo: &[f64], h: f64, order: usize) -> Vec<(Vec<f64>, f64)> {
    let d = lo.len();
    let (t, wt) = gauss_legendre01(order);
    let vol = h.powi(d as i32);
    multi_range(&vec![0; d], &vec![order as i64 - 1; d])
        .into_iter()
        .map(|ix| {
            let x: Vec<f64> = (0..d).map(|k| lo[k] + h * t[ix[k] as usize]).collect();
            let w: f64 = ix.iter().map(|&i| wt[i as usize]).product();
            (x, w * vol)
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CellQuadOptions {
    pub order: usize,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_depth: usize,
}

impl Default for CellQuadOptions {
    fn default() -> Self {
        Self { order: 6, rel_tol: 1e-8, abs_tol: 1e-300, max_depth: 4 }
    }
}

/// Integrates `f` over a cell, comparing consecutive orders and refining by
/// halving into the `2^d` child cells until they agree.
pub fn integrate_cell<F: Fn(&[f64]) -> f64>(
    f: &F,
    t: &PathSimplex,
    opts: &CellQuadOptions,
) -> Result<f64> {
    let d = t.dim();
    let lo = SimplexRule::new(d, opts.order);
    let hi = SimplexRule::new(d, opts.order + 1);
    integrate_cell_with(f, t, &lo, &hi, opts, None, 0)
}

fn integrate_cell_with<F: Fn(&[f64]) -> f64>(
    f: &F,
    t: &PathSimplex,
    lo: &SimplexRule,
    hi: &SimplexRule,
    opts: &CellQuadOptions,
    budget: Option<f64>,
    depth: usize,
) -> Result<f64> {
    let a: f64 = lo.map(t).map(|(x, w)| w * f(&x)).sum();
    let b: f64 = hi.map(t).map(|(x, w)| w * f(&x)).sum();
    // the error budget is fixed at the top level and split evenly among children
    let budget = budget.unwrap_or(opts.rel_tol * b.abs()).max(opts.abs_tol);
    if (a - b).abs() <= budget {
        return Ok(b);
    }
    if depth >= opts.max_depth {
        return Err(Error::Quadrature(format!(
            "cell {:?}/{:?} at r={}: orders {} and {} give {a:e} vs {b:e}",
            t.anchor,
            t.perm.to_one_based(),
            t.r,
            lo.order,
            hi.order
        )));
    }
    let kids = t.children();
    let share = budget / kids.len() as f64;
    let mut s = 0.0;
    for c in &kids {
        s += integrate_cell_with(f, c, lo, hi, opts, Some(share), depth + 1)?;
    }
    Ok(s)
}
