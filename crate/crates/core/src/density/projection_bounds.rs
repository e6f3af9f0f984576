//! Numerical check of the approximation bounds for the local-average projection
//! `lambda = sum_a (avg of u over a r + [0,r)^d) chi_r^a`.
//!
//! With a trivial mixing space the four bounds read, for `|u| <= 1`:
//!
//! ```text
//! (i)   |lambda^a| <= 1
//! (ii)  |int g (u - lambda) kappa rho| <= omega_r^g + |g|_inf delta_r
//! (iii) |E^{kappa rho}(g, u - lambda)| <= sqrt(d) (omega_r^{grad g} + D^g delta_r) E^rho(u,u)^{1/2}
//! (iv)  E^{kappa rho}(lambda, lambda) <= C_r E^rho(u,u)
//! ```
//!
//! where (ii) uses the cube/tent pair and (iii), (iv) the axis pairs.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::perturbation::{estimate, modulus, proof_pairs, CutoffDensity, ResidualOptions};
use super::{cell_integral_of, Cutoff, Density};
use crate::error::Result;
use crate::pl_space::{local_average_project, ProjectionOptions};
use crate::quadrature::CellQuadOptions;
use crate::triangulation::GridSpec;

type ScalarFn<'a> = &'a (dyn Fn(&[f64]) -> f64 + Sync);
type VectorFn<'a> = &'a (dyn Fn(&[f64]) -> Vec<f64> + Sync);

/// Function with its gradient.
#[derive(Clone, Copy)]
pub struct Smooth<'a> {
    pub value: ScalarFn<'a>,
    pub grad: VectorFn<'a>,
}

#[derive(Clone, Copy)]
pub struct CompactSmooth<'a> {
    pub f: Smooth<'a>,
    /// Box outside of which the function vanishes.
    pub lo: &'a [f64],
    pub hi: &'a [f64],
    /// Gradient component `i` as a scalar function.
    pub partial: &'a (dyn Fn(&[f64], usize) -> f64 + Sync),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub lhs: f64,
    pub rhs: f64,
}

impl BoundCheck {
    pub fn holds(&self) -> bool {
        // rounding slack only
        self.lhs <= self.rhs + 1e-12 * self.rhs.abs()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectionBounds {
    pub r: f64,
    pub coefficient_bound: BoundCheck,
    pub weak_error: BoundCheck,
    pub energy_cross: BoundCheck,
    pub energy_growth: BoundCheck,
    pub omega_g: f64,
    pub omega_grad_g: f64,
    pub grad_bound: f64,
    pub delta_cube_tent: f64,
    pub delta_axis: f64,
    pub c_axis: f64,
}

impl ProjectionBounds {
    pub fn all_hold(&self) -> bool {
        self.coefficient_bound.holds() && self.weak_error.holds() && self.energy_cross.holds() && self.energy_growth.holds()
    }
}

/// Evaluates both sides of the four bounds for one `(rho, kappa, u, g, r)`.
pub fn check_projection_bounds<D: Density + ?Sized>(
    rho: &D,
    kappa: &Cutoff,
    u: Smooth<'_>,
    g: CompactSmooth<'_>,
    r: f64,
    opts: &ResidualOptions,
) -> Result<ProjectionBounds> {
    let d = rho.dim();
    let (lo, hi) = rho.support_box();
    let grid = GridSpec::covering(r, &lo, &hi)?;
    let (lambda, _) = local_average_project(|x: &[f64]| (u.value)(x), &grid, ProjectionOptions::default());
    let weighted = CutoffDensity::new(rho, kappa);
    let q = CellQuadOptions { order: 5, rel_tol: 1e-9, abs_tol: 1e-14, max_depth: 3 };

    let cells = grid.cells();
    let sums: Vec<Result<[f64; 4]>> = cells
        .par_iter()
        .map(|t| {
            let grad_l = lambda.gradient_on_cell(t);
            let glam2: f64 = grad_l.iter().map(|v| v * v).sum();
            let weak = cell_integral_of(&weighted, t, |x| (g.f.value)(x) * ((u.value)(x) - lambda.eval_sum(x)), &q)?;
            let cross = cell_integral_of(
                &weighted,
                t,
                |x| {
                    let gg = (g.f.grad)(x);
                    let gu = (u.grad)(x);
                    (0..d).map(|k| gg[k] * (gu[k] - grad_l[k])).sum()
                },
                &q,
            )?;
            let lam_energy = glam2 * cell_integral_of(&weighted, t, |_| 1.0, &q)?;
            let u_energy = cell_integral_of(rho, t, |x| (u.grad)(x).iter().map(|v| v * v).sum(), &q)?;
            Ok([weak, cross, lam_energy, u_energy])
        })
        .collect();
    let mut tot = [0.0; 4];
    for s in sums {
        let s = s?;
        for k in 0..4 {
            tot[k] += s[k];
        }
    }

    let sp = estimate(rho, kappa, r, &proof_pairs(d), opts)?;
    let delta_cube_tent = sp.pair("cube|tent").map(|p| p.delta).unwrap_or(0.0);
    let axis: Vec<_> = sp.pairs.iter().filter(|p| p.pair_id.starts_with("axis_avg")).collect();
    let delta_axis = axis.iter().map(|p| p.delta).fold(0.0, f64::max);
    let c_axis = axis.iter().map(|p| p.c).fold(0.0, f64::max);

    let mg = modulus(|x: &[f64]| (g.f.value)(x), g.lo, g.hi, r, 16, None);
    let (omega_g, g_sup) = (mg.omega, mg.sup_abs);
    let mut omega_grad_g = 0.0f64;
    let mut grad_bound = 0.0f64;
    for i in 0..d {
        let m = modulus(|x: &[f64]| (g.partial)(x, i), g.lo, g.hi, r, 16, Some(&|x: &[f64]| vec![(g.partial)(x, i)]));
        omega_grad_g = omega_grad_g.max(m.omega);
        grad_bound = grad_bound.max(m.grad_bound.unwrap_or(0.0));
    }
    let e_u = tot[3];
    Ok(ProjectionBounds {
        r,
        coefficient_bound: BoundCheck { lhs: lambda.bound(), rhs: 1.0 },
        weak_error: BoundCheck { lhs: tot[0].abs(), rhs: omega_g + g_sup * delta_cube_tent },
        energy_cross: BoundCheck {
            lhs: tot[1].abs(),
            rhs: (d as f64).sqrt() * (omega_grad_g + grad_bound * delta_axis) * e_u.sqrt(),
        },
        energy_growth: BoundCheck { lhs: tot[2], rhs: c_axis * e_u },
        omega_g,
        omega_grad_g,
        grad_bound,
        delta_cube_tent,
        delta_axis,
        c_axis,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::DensitySpec;

    fn bump(x: f64) -> f64 {
        if x.abs() < 1.0 {
            (1.0 - x * x).powi(2)
        } else {
            0.0
        }
    }

    fn dbump(x: f64) -> f64 {
        if x.abs() < 1.0 {
            -4.0 * x * (1.0 - x * x)
        } else {
            0.0
        }
    }

    #[test]
    fn bounds_hold_for_gaussian() {
        let rho = DensitySpec::standard_gaussian(1);
        let u = |x: &[f64]| (2.0 * x[0]).sin();
        let du = |x: &[f64]| vec![2.0 * (2.0 * x[0]).cos()];
        let g = |x: &[f64]| bump(x[0]);
        let dg = |x: &[f64]| vec![dbump(x[0])];
        let pg = |x: &[f64], _: usize| dbump(x[0]);
        let g = CompactSmooth { f: Smooth { value: &g, grad: &dg }, lo: &[-1.0], hi: &[1.0], partial: &pg };
        let b = check_projection_bounds(&rho, &Cutoff::One, Smooth { value: &u, grad: &du }, g, 0.25, &ResidualOptions::default())
            .unwrap();
        assert!(b.all_hold(), "{b:?}");
        assert!(b.coefficient_bound.lhs <= 1.0);
        // sup |g'| of the bump is 8/(3 sqrt 3)
        assert!((b.grad_bound - 8.0 / (3.0 * 3f64.sqrt())).abs() < 2e-2, "{}", b.grad_bound);
        assert!(b.delta_cube_tent > 0.0 && b.c_axis > 0.0);
    }

    #[test]
    fn affine_u_is_reproduced_in_the_interior() {
        // the local average of an affine function is affine, so the weak error only sees
        // the half-cell offset of the averaging window: u - lambda = -r/2 * slope
        let rho = DensitySpec::uniform(vec![-2.0], vec![2.0]).unwrap();
        let u = |x: &[f64]| 0.25 * x[0];
        let du = |_: &[f64]| vec![0.25];
        let g = |x: &[f64]| bump(x[0]);
        let dg = |x: &[f64]| vec![dbump(x[0])];
        let pg = |x: &[f64], _: usize| dbump(x[0]);
        let g = CompactSmooth { f: Smooth { value: &g, grad: &dg }, lo: &[-1.0], hi: &[1.0], partial: &pg };
        let r = 0.25;
        let b = check_projection_bounds(&rho, &Cutoff::One, Smooth { value: &u, grad: &du }, g, r, &ResidualOptions::default())
            .unwrap();
        // int bump = 16/15, density 1/4
        let expected = 0.25 * r / 2.0 * 16.0 / 15.0 / 4.0;
        assert!((b.weak_error.lhs - expected).abs() < 1e-8, "{} vs {expected}", b.weak_error.lhs);
        assert!(b.energy_cross.lhs < 1e-9, "{}", b.energy_cross.lhs);
        assert!(b.all_hold());
    }
}
