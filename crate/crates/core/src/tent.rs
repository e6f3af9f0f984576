//! Hyperplane interpolants on cells, tent functions and the primal catalog.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::triangulation::{locate, simplices_leaving, PathSimplex};

/// `H_T^i` in cell-local coordinates `xl` (0-based permutation `p`).
#[inline]
pub(crate) fn h_local(p: &[usize], i: usize, xl: &[f64]) -> f64 {
    let d = p.len();
    if i == 0 {
        1.0 - xl[p[0]]
    } else if i < d {
        xl[p[i - 1]] - xl[p[i]]
    } else {
        xl[p[d - 1]]
    }
}

/// Affine interpolant of the vertex sample `e_i` on cell `t`, evaluated at `x`.
pub fn eval_h(t: &PathSimplex, i: usize, x: &[f64]) -> Result<f64> {
    let d = t.dim();
    if i > d {
        return Err(Error::IndexOutOfRange { index: i, d });
    }
    if x.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: x.len() });
    }
    Ok(h_local(t.perm.axes(), i, &t.local_coords(x)))
}

/// Constant gradient of `H_T^i`.
pub fn grad_h(t: &PathSimplex, i: usize) -> Result<Vec<f64>> {
    let d = t.dim();
    if i > d {
        return Err(Error::IndexOutOfRange { index: i, d });
    }
    let mut g = vec![0.0; d];
    if i >= 1 {
        g[t.perm.axis(i - 1)] += 1.0 / t.r;
    }
    if i < d {
        g[t.perm.axis(i)] -= 1.0 / t.r;
    }
    Ok(g)
}

/// Scalar product of `grad_h(T, i)` and `grad_h(T, j)`; depends only on `(d, r, i, j)`.
pub fn grad_dot(d: usize, r: f64, i: usize, j: usize) -> Result<f64> {
    if i > d || j > d {
        return Err(Error::IndexOutOfRange { index: i.max(j), d });
    }
    let v = if i == j {
        if i == 0 || i == d {
            1.0
        } else {
            2.0
        }
    } else if i.abs_diff(j) == 1 {
        -1.0
    } else {
        0.0
    };
    Ok(v / (r * r))
}

#[derive(Clone, Debug, PartialEq)]
pub struct TentEvaluation {
    pub value: f64,
    pub owning_cell: PathSimplex,
    /// `Some(i)` with `T(i) = alpha`, or `None` when `x` lies outside the support.
    pub local_index: Option<usize>,
}

/// `chi_r^alpha(x)` together with the cell that decided it.
pub fn eval_tent_detail(alpha: &[i64], r: f64, x: &[f64]) -> TentEvaluation {
    let t = locate(x, r);
    match t.vertex_position(alpha) {
        Some(i) => {
            let v = h_local(t.perm.axes(), i, &t.local_coords(x));
            TentEvaluation { value: v, owning_cell: t, local_index: Some(i) }
        }
        None => TentEvaluation { value: 0.0, owning_cell: t, local_index: None },
    }
}

pub fn eval_tent(alpha: &[i64], r: f64, x: &[f64]) -> f64 {
    eval_tent_detail(alpha, r, x).value
}

/// Members of the finite primal catalog, all at unit scale.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PrimalFunction {
    UnitCube,
    ShiftedCube,
    Tent,
    /// `y -> int_0^1 1_[0,1)^d(y - t e_axis) dt`
    AxisAveraged { axis: usize },
    /// Indicator of the cells whose path leaves the origin along `axis`.
    SimplexUnion { axis: usize },
}

impl PrimalFunction {
    pub fn eval(&self, y: &[f64]) -> f64 {
        let unit = |v: f64| (0.0..1.0).contains(&v);
        match *self {
            PrimalFunction::UnitCube => indicator(y.iter().all(|&v| unit(v))),
            PrimalFunction::ShiftedCube => indicator(y.iter().all(|&v| (-1.0..0.0).contains(&v))),
            PrimalFunction::Tent => eval_tent(&vec![0; y.len()], 1.0, y),
            PrimalFunction::AxisAveraged { axis } => {
                let others = y.iter().enumerate().all(|(k, &v)| k == axis || unit(v));
                if !others {
                    return 0.0;
                }
                let v = y[axis];
                if (0.0..1.0).contains(&v) {
                    v
                } else if (1.0..2.0).contains(&v) {
                    2.0 - v
                } else {
                    0.0
                }
            }
            PrimalFunction::SimplexUnion { axis } => {
                let t = locate(y, 1.0);
                let s = t.perm.step_of(axis);
                indicator(t.vertex(s).iter().all(|&a| a == 0))
            }
        }
    }

    /// `phi_r^alpha(x) = phi((x - alpha r)/r)`.
    pub fn eval_scaled(&self, alpha: &[i64], r: f64, x: &[f64]) -> f64 {
        let y: Vec<f64> = x.iter().zip(alpha).map(|(&xi, &a)| xi / r - a as f64).collect();
        self.eval(&y)
    }

    /// Closed bounding box of the support at unit scale, per axis.
    pub fn support(&self, d: usize) -> (Vec<f64>, Vec<f64>) {
        match *self {
            PrimalFunction::UnitCube => (vec![0.0; d], vec![1.0; d]),
            PrimalFunction::ShiftedCube => (vec![-1.0; d], vec![0.0; d]),
            PrimalFunction::Tent | PrimalFunction::SimplexUnion { .. } => {
                (vec![-1.0; d], vec![1.0; d])
            }
            PrimalFunction::AxisAveraged { axis } => {
                let mut hi = vec![1.0; d];
                hi[axis] = 2.0;
                (vec![0.0; d], hi)
            }
        }
    }

    /// Every member of the catalog for dimension `d`.
    pub fn catalog(d: usize) -> Vec<PrimalFunction> {
        let mut out = vec![PrimalFunction::UnitCube, PrimalFunction::ShiftedCube, PrimalFunction::Tent];
        out.extend((0..d).map(|axis| PrimalFunction::AxisAveraged { axis }));
        out.extend((0..d).map(|axis| PrimalFunction::SimplexUnion { axis }));
        out
    }

    pub fn label(&self) -> String {
        match self {
            PrimalFunction::UnitCube => "cube".into(),
            PrimalFunction::ShiftedCube => "shifted_cube".into(),
            PrimalFunction::Tent => "tent".into(),
            PrimalFunction::AxisAveraged { axis } => format!("axis_avg{}", axis + 1),
            PrimalFunction::SimplexUnion { axis } => format!("simplex_union{}", axis + 1),
        }
    }

    /// Unit-scale cells on which this function is not identically zero.
    pub fn support_cells(&self, d: usize) -> Vec<PathSimplex> {
        if let PrimalFunction::SimplexUnion { axis } = *self {
            return simplices_leaving(&vec![0; d], axis, 1.0)
                .expect("axis in range")
                .iter()
                .cloned()
                .collect();
        }
        let (lo, hi) = self.support(d);
        let lo: Vec<i64> = lo.iter().map(|v| *v as i64).collect();
        let hi: Vec<i64> = hi.iter().map(|v| *v as i64 - 1).collect();
        let mut out = Vec::new();
        for a in crate::triangulation::multi_range(&lo, &hi) {
            for p in crate::triangulation::Permutation::all(d) {
                let t = PathSimplex::new(a.clone(), p, 1.0);
                if self.eval(&t.centroid()) > 0.0 {
                    out.push(t);
                }
            }
        }
        out
    }
}

#[inline]
fn indicator(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

pub fn eval_primal(p: PrimalFunction, x: &[f64]) -> f64 {
    p.eval(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::triangulation::{incident_vertices, membership, multi_range, Permutation};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tent_brute(alpha: &[i64], r: f64, x: &[f64]) -> f64 {
        incident_vertices(alpha, r)
            .into_iter()
            .filter(|(t, _)| membership(x, t))
            .map(|(t, i)| eval_h(&t, i, x).unwrap())
            .sum()
    }

    #[test]
    fn h_is_nodal_and_sums_to_one() {
        for d in 1..=4 {
            for p in Permutation::all(d) {
                let t = PathSimplex::new(vec![0; d], p, 0.5);
                for i in 0..=d {
                    for j in 0..=d {
                        let v = eval_h(&t, i, &t.vertex_coords(j)).unwrap();
                        assert_eq!(v, if i == j { 1.0 } else { 0.0 });
                    }
                }
                let x = vec![0.123; d];
                let s: f64 = (0..=d).map(|i| eval_h(&t, i, &x).unwrap()).sum();
                assert!((s - 1.0).abs() < 1e-15);
            }
        }
        let t = PathSimplex::new(vec![0, 0], Permutation::from_one_based(&[1, 2]).unwrap(), 1.0);
        assert!((eval_h(&t, 1, &[0.7, 0.3]).unwrap() - 0.4).abs() < 1e-15);
        assert!(eval_h(&t, 3, &[0.7, 0.3]).is_err());
    }

    #[test]
    fn gradients_match_formula_and_differences() {
        let t = PathSimplex::new(vec![0, 0, 0], Permutation::from_one_based(&[2, 3, 1]).unwrap(), 0.5);
        assert_eq!(grad_h(&t, 0).unwrap(), vec![0.0, -2.0, 0.0]);
        assert_eq!(grad_h(&t, 3).unwrap(), vec![2.0, 0.0, 0.0]);
        let x = vec![0.1, 0.4, 0.25]; // x'_2 > x'_3 > x'_1, interior of the cell
        assert!(t.contains(&x));
        let h = 1e-6;
        for i in 0..=3 {
            let g = grad_h(&t, i).unwrap();
            for k in 0..3 {
                let mut xp = x.clone();
                xp[k] += h;
                let fd = (eval_h(&t, i, &xp).unwrap() - eval_h(&t, i, &x).unwrap()) / h;
                assert!((fd - g[k]).abs() < 1e-5);
            }
        }
        for i in 0..=3 {
            for j in 0..=3 {
                let a = grad_h(&t, i).unwrap();
                let b = grad_h(&t, j).unwrap();
                let dot: f64 = a.iter().zip(&b).map(|(p, q)| p * q).sum();
                assert!((dot - grad_dot(3, 0.5, i, j).unwrap()).abs() < 1e-12);
            }
        }
        assert_eq!(grad_dot(3, 1.0, 1, 1).unwrap(), 2.0);
        assert_eq!(grad_dot(3, 1.0, 0, 1).unwrap(), -1.0);
        assert_eq!(grad_dot(3, 1.0, 0, 2).unwrap(), 0.0);
    }

    #[test]
    fn tent_values() {
        assert_eq!(eval_tent(&[0, 0], 1.0, &[0.0, 0.0]), 1.0);
        assert_eq!(eval_tent(&[0, 0], 1.0, &[1.0, 0.0]), 0.0);
        assert_eq!(eval_tent(&[0, 0], 1.0, &[0.5, 0.5]), tent_brute(&[0, 0], 1.0, &[0.5, 0.5]));
        assert_eq!(eval_tent(&[0, 0], 1.0, &[0.5, 0.5]), 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for d in 1..=3 {
            for _ in 0..2000 {
                let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.5..1.5)).collect();
                let a = eval_tent(&vec![0; d], 1.0, &x);
                let b = tent_brute(&vec![0; d], 1.0, &x);
                assert!((a - b).abs() < 1e-14);
                assert!((0.0..=1.0).contains(&a));
            }
        }
    }

    #[test]
    fn catalog_axioms() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for d in 1..=3 {
            for p in PrimalFunction::catalog(d) {
                let (lo, hi) = p.support(d);
                assert!(lo.iter().all(|&v| v >= -2.0) && hi.iter().all(|&v| v <= 2.0));
                // unit integral over support cells
                let rule = crate::quadrature::SimplexRule::new(d, 3);
                let mut total = 0.0;
                for a in multi_range(&vec![-2; d], &vec![1; d]) {
                    for perm in Permutation::all(d) {
                        let t = PathSimplex::new(a.clone(), perm, 1.0);
                        total += rule.map(&t).map(|(x, w)| w * p.eval(&x)).sum::<f64>();
                    }
                }
                assert!((total - 1.0).abs() < 1e-12, "{p:?} integral {total}");
                // shifts sum to one
                for _ in 0..2000 {
                    let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-3.0..3.0)).collect();
                    let lo_z: Vec<i64> = x.iter().map(|v| v.floor() as i64 - 2).collect();
                    let hi_z: Vec<i64> = x.iter().map(|v| v.floor() as i64 + 2).collect();
                    let s: f64 = multi_range(&lo_z, &hi_z)
                        .iter()
                        .map(|z| p.eval_scaled(z, 1.0, &x))
                        .sum();
                    assert!((s - 1.0).abs() < 1e-12, "{p:?} shift sum {s}");
                }
            }
        }
    }

    #[test]
    fn cube_indicator_edges() {
        assert_eq!(PrimalFunction::UnitCube.eval(&[0.0]), 1.0);
        assert_eq!(PrimalFunction::UnitCube.eval(&[-0.1]), 0.0);
        let su = PrimalFunction::SimplexUnion { axis: 0 };
        assert_eq!(su.support_cells(3).len(), 6);
    }
}
