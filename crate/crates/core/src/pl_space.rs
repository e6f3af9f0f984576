//! Weighted tent sums `sum_alpha w_alpha chi_r^alpha` on a lattice box.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::quadrature::cube_rule;
use crate::tent::h_local;
use crate::triangulation::{locate, GridSpec, LatticePoint, PathSimplex};

#[derive(Clone, Debug, PartialEq)]
pub struct TentCoefficients {
    pub grid: GridSpec,
    weights: BTreeMap<LatticePoint, f64>,
}

/// Constant gradient per cell.
pub type CellGradientField = BTreeMap<PathSimplex, Vec<f64>>;

impl TentCoefficients {
    pub fn new(grid: GridSpec) -> Self {
        Self { grid, weights: BTreeMap::new() }
    }

    /// Weights from a function of the node multi-index, over every node of the box.
    pub fn from_fn(grid: GridSpec, f: impl Fn(&[i64]) -> f64) -> Self {
        let weights = grid.nodes().into_iter().map(|a| { let v = f(&a); (a, v) }).collect();
        Self { grid, weights }
    }

    pub fn set(&mut self, alpha: LatticePoint, w: f64) -> Result<()> {
        if alpha.len() != self.grid.d {
            return Err(Error::DimensionMismatch { expected: self.grid.d, got: alpha.len() });
        }
        self.weights.insert(alpha, w);
        Ok(())
    }

    /// Unstored nodes are zero.
    pub fn get(&self, alpha: &[i64]) -> f64 {
        self.weights.get(alpha).copied().unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&LatticePoint, &f64)> {
        self.weights.iter()
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// `max |w_alpha|`.
    pub fn bound(&self) -> f64 {
        self.weights.values().fold(0.0, |m, w| m.max(w.abs()))
    }

    pub fn eval_sum(&self, x: &[f64]) -> f64 {
        let t = locate(x, self.grid.r);
        let xl = t.local_coords(x);
        let p = t.perm.axes();
        t.vertices()
            .iter()
            .enumerate()
            .map(|(i, v)| self.get(v) * h_local(p, i, &xl))
            .sum()
    }

    /// Telescoping differences `w_{T(k+1)} - w_{T(k)}` along the path of `t`.
    fn path_differences(&self, t: &PathSimplex) -> Vec<f64> {
        let v = t.vertices();
        v.windows(2).map(|w| self.get(&w[1]) - self.get(&w[0])).collect()
    }

    /// Gradient on one cell: component `perm.axis(k)` is the `k`-th path difference over `r`.
    pub fn gradient_on_cell(&self, t: &PathSimplex) -> Vec<f64> {
        let diffs = self.path_differences(t);
        let mut g = vec![0.0; t.dim()];
        for (k, dk) in diffs.into_iter().enumerate() {
            g[t.perm.axis(k)] = dk / t.r;
        }
        g
    }

    pub fn weak_gradient(&self) -> CellGradientField {
        self.grid
            .cells()
            .into_iter()
            .map(|t| {
                let g = self.gradient_on_cell(&t);
                (t, g)
            })
            .collect()
    }

    pub fn grad_sq_norm(&self, t: &PathSimplex) -> f64 {
        let s: f64 = self.path_differences(t).iter().map(|d| d * d).sum();
        s / (t.r * t.r)
    }

    /// Nodal values clipped into `[0, 1]`.
    pub fn clip(&self) -> Self {
        let weights = self.weights.iter().map(|(a, &w)| (a.clone(), w.clamp(0.0, 1.0))).collect();
        Self { grid: self.grid.clone(), weights }
    }

    pub fn to_json(&self) -> serde_json::Value {
        let doc = CoefficientsDoc {
            d: self.grid.d,
            r: self.grid.r,
            r#box: BoxDoc { lo: self.grid.box_lo(), hi: self.grid.box_hi() },
            entries: self
                .weights
                .iter()
                .map(|(a, &w)| EntryDoc { index: a.clone(), w })
                .collect(),
        };
        serde_json::to_value(doc).expect("plain data serializes")
    }

    pub fn from_json(v: &serde_json::Value) -> Result<Self> {
        let doc: CoefficientsDoc = serde_json::from_value(v.clone())?;
        if doc.r#box.lo.len() != doc.d || doc.r#box.hi.len() != doc.d {
            return Err(Error::DimensionMismatch { expected: doc.d, got: doc.r#box.lo.len() });
        }
        let grid = GridSpec::from_box(doc.r, &doc.r#box.lo, &doc.r#box.hi)?;
        let mut c = Self::new(grid);
        for e in doc.entries {
            c.set(e.index, e.w)?;
        }
        Ok(c)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CoefficientsDoc {
    d: usize,
    r: f64,
    r#box: BoxDoc,
    entries: Vec<EntryDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BoxDoc {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EntryDoc {
    index: Vec<i64>,
    w: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ProjectionReport {
    /// Nodes where the refined cube average disagreed with the coarse one.
    pub flagged: Vec<(LatticePoint, f64)>,
    pub tolerance: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct ProjectionOptions {
    pub order: usize,
    pub tolerance: f64,
}

impl Default for ProjectionOptions {
    fn default() -> Self {
        Self { order: 4, tolerance: 1e-8 }
    }
}

/// `w_alpha` = average of `u` over `alpha r + [0, r)^d`, for every node of the box.
pub fn local_average_project<U>(
    u: U,
    grid: &GridSpec,
    opts: ProjectionOptions,
) -> (TentCoefficients, ProjectionReport)
where
    U: Fn(&[f64]) -> f64 + Sync,
{
    let r = grid.r;
    let d = grid.d;
    let sub = crate::triangulation::multi_range(&vec![0; d], &vec![1; d]);
    let rows: Vec<(LatticePoint, f64, f64)> = grid
        .nodes()
        .into_par_iter()
        .map(|a| {
            let lo = grid.coords(&a);
            let coarse = average(&cube_rule(&lo, r, opts.order), &u);
            let fine: Vec<(Vec<f64>, f64)> = sub
                .iter()
                .flat_map(|b| {
                    let slo: Vec<f64> =
                        lo.iter().zip(b).map(|(l, &o)| l + o as f64 * r / 2.0).collect();
                    cube_rule(&slo, r / 2.0, opts.order)
                })
                .collect();
            (a, coarse, average(&fine, &u))
        })
        .collect();
    let mut c = TentCoefficients::new(grid.clone());
    let mut report = ProjectionReport { flagged: Vec::new(), tolerance: opts.tolerance };
    for (a, coarse, fine) in rows {
        let gap = (coarse - fine).abs();
        if gap > opts.tolerance * fine.abs().max(1.0) {
            report.flagged.push((a.clone(), gap));
        }
        c.weights.insert(a, fine);
    }
    (c, report)
}

fn average<U: Fn(&[f64]) -> f64>(rule: &[(Vec<f64>, f64)], u: &U) -> f64 {
    let (s, w) = rule.iter().fold((0.0, 0.0), |(s, m), (x, w)| (s + w * u(x), m + w));
    s / w
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::triangulation::Permutation;
    use proptest::prelude::*;

    fn grid2() -> GridSpec {
        GridSpec::centered(2, 0.25, 4).unwrap()
    }

    #[test]
    fn constants_and_affine_reproduced() {
        let g = grid2();
        let one = TentCoefficients::from_fn(g.clone(), |_| 1.0);
        assert!((one.eval_sum(&[0.13, -0.4]) - 1.0).abs() < 1e-15);
        let v = [0.7, -1.3];
        let lin = TentCoefficients::from_fn(g.clone(), |a| {
            v[0] * a[0] as f64 * 0.25 + v[1] * a[1] as f64 * 0.25
        });
        for k in 0..1000 {
            let x = [((k * 37) % 97) as f64 / 97.0 * 1.8 - 0.9, ((k * 53) % 89) as f64 / 89.0 * 1.8 - 0.9];
            assert!((lin.eval_sum(&x) - (v[0] * x[0] + v[1] * x[1])).abs() < 1e-13);
        }
        for t in g.cells() {
            assert!((lin.grad_sq_norm(&t) - (v[0] * v[0] + v[1] * v[1])).abs() < 1e-12);
            assert_eq!(one.grad_sq_norm(&t), 0.0);
        }
        let mut single = TentCoefficients::new(g);
        single.set(vec![0, 0], 3.0).unwrap();
        let x = [0.05, -0.1];
        assert_eq!(single.eval_sum(&x), 3.0 * crate::tent::eval_tent(&[0, 0], 0.25, &x));
    }

    #[test]
    fn hat_slopes() {
        let g = GridSpec::centered(1, 0.5, 2).unwrap();
        let mut c = TentCoefficients::new(g);
        c.set(vec![0], 1.0).unwrap();
        let left = PathSimplex::new(vec![-1], Permutation::identity(1), 0.5);
        let right = PathSimplex::new(vec![0], Permutation::identity(1), 0.5);
        assert_eq!(c.gradient_on_cell(&left), vec![2.0]);
        assert_eq!(c.gradient_on_cell(&right), vec![-2.0]);
    }

    #[test]
    fn clip_example() {
        let g = GridSpec::new(1.0, vec![0], vec![1]).unwrap();
        let mut c = TentCoefficients::new(g);
        c.set(vec![0], -1.0).unwrap();
        c.set(vec![1], 2.0).unwrap();
        let t = PathSimplex::new(vec![0], Permutation::identity(1), 1.0);
        assert_eq!(c.grad_sq_norm(&t), 9.0);
        let k = c.clip();
        assert_eq!((k.get(&[0]), k.get(&[1])), (0.0, 1.0));
        assert_eq!(k.grad_sq_norm(&t), 1.0);
    }

    #[test]
    fn projection_examples() {
        let g = GridSpec::centered(2, 0.25, 3).unwrap();
        let (c, rep) = local_average_project(|_| 0.4, &g, ProjectionOptions::default());
        assert!(rep.flagged.is_empty());
        assert!(c.iter().all(|(_, &w)| (w - 0.4).abs() < 1e-14));
        let (c, _) = local_average_project(|x| x[0], &g, ProjectionOptions::default());
        for (a, &w) in c.iter() {
            assert!((w - (a[0] as f64 * 0.25 + 0.125)).abs() < 1e-14);
        }
        let (c, rep) = local_average_project(
            |x| if x[0] > 0.1 { 1.0 } else { -1.0 },
            &g,
            ProjectionOptions::default(),
        );
        assert!(c.bound() <= 1.0 + 1e-15);
        assert!(!rep.flagged.is_empty());
    }

    #[test]
    fn json_round_trip() {
        let g = grid2();
        let c = TentCoefficients::from_fn(g, |a| a[0] as f64 - 0.5 * a[1] as f64);
        let back = TentCoefficients::from_json(&c.to_json()).unwrap();
        assert_eq!(back, c);
    }

    proptest! {
        #[test]
        fn clipping_never_raises_cell_energy(ws in proptest::collection::vec(-2.0f64..3.0, 25)) {
            let g = GridSpec::new(0.5, vec![0, 0], vec![4, 4]).unwrap();
            let nodes = g.nodes();
            let mut c = TentCoefficients::new(g.clone());
            for (a, w) in nodes.into_iter().zip(ws) {
                c.set(a, w).unwrap();
            }
            let k = c.clip();
            for t in g.cells() {
                prop_assert!(k.grad_sq_norm(&t) <= c.grad_sq_norm(&t));
            }
        }

        #[test]
        fn gradient_square_identity(ws in proptest::collection::vec(-5.0f64..5.0, 27)) {
            let g = GridSpec::new(0.5, vec![0, 0, 0], vec![2, 2, 2]).unwrap();
            let nodes = g.nodes();
            let mut c = TentCoefficients::new(g.clone());
            for (a, w) in nodes.into_iter().zip(ws) {
                c.set(a, w).unwrap();
            }
            for (t, grad) in c.weak_gradient() {
                let s: f64 = grad.iter().map(|v| v * v).sum();
                prop_assert!((s - c.grad_sq_norm(&t)).abs() <= 1e-14 * s.max(1.0));
            }
        }
    }
}
