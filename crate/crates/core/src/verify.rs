//! Invariant suites for the triangulation, the tent basis and the piecewise linear space.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::density::bv::BvFunction;
use crate::error::{Error, Result};
use crate::pl_space::TentCoefficients;
use crate::quadrature::{integrate_cell, CellQuadOptions};
use crate::seed;
use crate::tent::{eval_h, eval_tent};
use crate::triangulation::{
    incident_vertices, locate, membership, perm_from_path, perm_to_path, simplex_volume, GridSpec, PathSimplex,
    Permutation,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub d: usize,
    pub r: f64,
    pub passed: bool,
    /// Worst observed deviation, or failure count for exact checks.
    pub value: f64,
    pub tolerance: f64,
    pub detail: String,
}

impl Check {
    fn new(name: &str, d: usize, r: f64, value: f64, tolerance: f64, detail: String) -> Self {
        Self { name: name.into(), d, r, passed: value <= tolerance, value, tolerance, detail }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub checks: Vec<Check>,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisSuiteConfig {
    pub dims: Vec<usize>,
    pub r_values: Vec<f64>,
    pub points: usize,
    pub gradient_trials: usize,
    pub volume_samples: usize,
    pub seed: u64,
}

impl Default for BasisSuiteConfig {
    fn default() -> Self {
        Self { dims: vec![2], r_values: vec![1.0, 0.25], points: 100_000, gradient_trials: 100, volume_samples: 1_000_000, seed: 1 }
    }
}

impl BasisSuiteConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dims.is_empty() || self.dims.iter().any(|&d| d == 0 || d > 6) {
            return Err(Error::InvalidArgument("dimensions must lie in 1..=6".into()));
        }
        if self.r_values.is_empty() || self.r_values.iter().any(|r| !(*r > 0.0) || !r.is_finite()) {
            return Err(Error::InvalidArgument("mesh sizes must be positive".into()));
        }
        Ok(())
    }
}

fn uniform_point(rng: &mut ChaCha8Rng, d: usize, half_width: f64) -> Vec<f64> {
    (0..d).map(|_| rng.gen_range(-half_width..half_width)).collect()
}

/// `perm_from_path(perm_to_path(p)) = p` for every permutation.
pub fn permutation_bijection(d: usize) -> Result<Check> {
    let mut bad = 0;
    let perms = Permutation::all(d);
    for p in &perms {
        let t = perm_to_path(p, &vec![0; d], 1.0)?;
        if perm_from_path(&t.vertices())? != *p {
            bad += 1;
        }
    }
    Ok(Check::new("permutation_bijection", d, 1.0, bad as f64, 0.0, format!("{} permutations", perms.len())))
}

/// The located cell contains the point and no other cell of the same cube does.
pub fn cell_partition(d: usize, r: f64, points: usize, root: u64) -> Check {
    let mut rng = seed::stream(root, &format!("verify/partition/d={d}/r={r}"));
    let perms = Permutation::all(d);
    let mut bad = 0;
    for _ in 0..points {
        let x = uniform_point(&mut rng, d, 3.0 * r);
        let t = locate(&x, r);
        let hits = perms
            .iter()
            .filter(|p| membership(&x, &PathSimplex::new(t.anchor.clone(), (*p).clone(), r)))
            .count();
        if !membership(&x, &t) || hits != 1 {
            bad += 1;
        }
    }
    Check::new("cell_partition", d, r, bad as f64, 0.0, format!("{points} random points"))
}

/// `sum_alpha chi_r^alpha(x) = 1`, summing over the corners of the cube around `x`.
pub fn partition_of_unity(d: usize, r: f64, points: usize, root: u64) -> Check {
    let mut rng = seed::stream(root, &format!("verify/unity/d={d}/r={r}"));
    let mut worst: f64 = 0.0;
    for _ in 0..points {
        let x = uniform_point(&mut rng, d, 3.0 * r);
        let base: Vec<i64> = x.iter().map(|v| (v / r).floor() as i64).collect();
        let mut s = 0.0;
        for mask in 0..(1usize << d) {
            let alpha: Vec<i64> = (0..d).map(|k| base[k] + ((mask >> k) & 1) as i64).collect();
            s += eval_tent(&alpha, r, &x);
        }
        worst = worst.max((s - 1.0).abs());
    }
    Check::new("partition_of_unity", d, r, worst, 1e-12, format!("{points} random points"))
}

/// `int chi_r^alpha = r^d` by cellwise quadrature over the support.
pub fn tent_mass(d: usize, r: f64) -> Result<Check> {
    let alpha = vec![1; d];
    let opts = CellQuadOptions::default();
    let mut total = 0.0;
    for (t, _) in incident_vertices(&alpha, r) {
        total += integrate_cell(&|x: &[f64]| eval_tent(&alpha, r, x), &t, &opts)?;
    }
    let want = r.powi(d as i32);
    Ok(Check::new("tent_mass", d, r, (total - want).abs() / want, 1e-8, format!("integral {total:.15e}")))
}

fn random_coefficients(d: usize, r: f64, rng: &mut ChaCha8Rng) -> Result<TentCoefficients> {
    let grid = GridSpec::centered(d, r, 2)?;
    let mut c = TentCoefficients::new(grid.clone());
    for a in grid.nodes() {
        c.set(a, rng.gen_range(-1.0..1.0))?;
    }
    Ok(c)
}

/// The telescoping formula for `|grad|^2` against the squared cell gradient.
pub fn weak_gradient_identity(d: usize, r: f64, trials: usize, root: u64) -> Result<Check> {
    let mut rng = seed::stream(root, &format!("verify/gradient/d={d}/r={r}"));
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let c = random_coefficients(d, r, &mut rng)?;
        for (t, g) in c.weak_gradient() {
            let a = c.grad_sq_norm(&t);
            let b: f64 = g.iter().map(|v| v * v).sum();
            worst = worst.max((a - b).abs() / a.abs().max(1.0));
        }
    }
    Ok(Check::new("weak_gradient_identity", d, r, worst, 1e-14, format!("{trials} random coefficient vectors")))
}

/// Central differences of the interpolant at cell centroids against the cell gradient.
pub fn finite_difference_gradient(d: usize, r: f64, trials: usize, root: u64) -> Result<Check> {
    let mut rng = seed::stream(root, &format!("verify/fd/d={d}/r={r}"));
    let h = 1e-6 * r;
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let c = random_coefficients(d, r, &mut rng)?;
        for t in c.grid.cells() {
            let x = t.centroid();
            let g = c.gradient_on_cell(&t);
            for k in 0..d {
                let (mut xp, mut xm) = (x.clone(), x.clone());
                xp[k] += h;
                xm[k] -= h;
                let fd = (c.eval_sum(&xp) - c.eval_sum(&xm)) / (2.0 * h);
                worst = worst.max((fd - g[k]).abs());
            }
        }
    }
    Ok(Check::new("finite_difference_gradient", d, r, worst, 1e-5, format!("step {h:e} at centroids")))
}

/// Traces of the two neighbouring cell interpolants agree on shared faces.
pub fn face_continuity(d: usize, r: f64, points: usize, root: u64) -> Result<Check> {
    let mut rng = seed::stream(root, &format!("verify/faces/d={d}/r={r}"));
    let c = random_coefficients(d, r, &mut rng)?;
    let trace = |t: &PathSimplex, x: &[f64]| -> Result<f64> {
        let mut s = 0.0;
        for (i, v) in t.vertices().iter().enumerate() {
            s += c.get(v) * eval_h(t, i, x)?;
        }
        Ok(s)
    };
    let mut worst: f64 = 0.0;
    for _ in 0..points {
        let mut x = uniform_point(&mut rng, d, 1.5 * r);
        let a = rng.gen_range(0..d);
        let mut normal = vec![0.0; d];
        if d > 1 && rng.gen_bool(0.5) {
            // interior face x_a = x_b of a cube
            let b = (a + rng.gen_range(1..d)) % d;
            let fa = (x[a] / r).floor();
            x[b] = (x[b] / r).floor() * r + (x[a] - fa * r);
            normal[a] = 1.0;
            normal[b] = -1.0;
        } else {
            x[a] = (x[a] / r).round() * r;
            normal[a] = 1.0;
        }
        let eps = 1e-7 * r;
        let xp: Vec<f64> = x.iter().zip(&normal).map(|(v, n)| v + eps * n).collect();
        let xm: Vec<f64> = x.iter().zip(&normal).map(|(v, n)| v - eps * n).collect();
        let (tp, tm) = (locate(&xp, r), locate(&xm, r));
        worst = worst.max((trace(&tp, &x)? - trace(&tm, &x)?).abs());
    }
    Ok(Check::new("face_continuity", d, r, worst, 1e-12, format!("{points} face points")))
}

/// Monte Carlo volume of one cell of the unit cube against `r^d / d!`.
///
/// Returns the check and the estimate; the tolerance is three binomial standard errors.
pub fn cell_volume(d: usize, samples: usize, root: u64) -> Check {
    let mut rng = seed::stream(root, &format!("verify/volume/d={d}"));
    let t = PathSimplex::new(vec![0; d], Permutation::identity(d), 1.0);
    let hits = (0..samples)
        .filter(|_| {
            let x: Vec<f64> = (0..d).map(|_| rng.gen::<f64>()).collect();
            membership(&x, &t)
        })
        .count();
    let p = simplex_volume(d, 1.0);
    let est = hits as f64 / samples as f64;
    let sigma = (p * (1.0 - p) / samples as f64).sqrt();
    Check::new("cell_volume", d, 1.0, (est - p).abs(), 3.0 * sigma, format!("estimate {est:.6} against {p:.6}"))
}

pub fn basis_suite(cfg: &BasisSuiteConfig) -> Result<SuiteReport> {
    cfg.validate()?;
    let mut checks = Vec::new();
    for &d in &cfg.dims {
        checks.push(permutation_bijection(d)?);
        checks.push(cell_volume(d, cfg.volume_samples, cfg.seed));
        for &r in &cfg.r_values {
            checks.push(cell_partition(d, r, cfg.points, cfg.seed));
            checks.push(partition_of_unity(d, r, cfg.points, cfg.seed));
            checks.push(tent_mass(d, r)?);
            checks.push(weak_gradient_identity(d, r, cfg.gradient_trials, cfg.seed)?);
            checks.push(finite_difference_gradient(d, r, cfg.gradient_trials.min(10), cfg.seed)?);
            checks.push(face_continuity(d, r, cfg.points.min(10_000), cfg.seed)?);
        }
    }
    let passed = checks.iter().all(|c| c.passed);
    Ok(SuiteReport { checks, passed })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeRow {
    pub m: usize,
    /// Largest `lower - f` or `f - upper` over the sample points; `<= 0` when the sandwich holds.
    pub worst_violation: f64,
    /// Largest `upper - lower` over the continuity sample points.
    pub continuity_gap: f64,
}

/// Tent envelopes of a BV function: sandwich at random points, shrinking gap away from
/// jumps, and the Jordan reconstruction on piece interiors.
pub fn envelope_checks(
    f: &BvFunction,
    m_values: &[usize],
    points: usize,
    window: (f64, f64),
    root: u64,
) -> Result<(Vec<EnvelopeRow>, Vec<Check>)> {
    if m_values.is_empty() || m_values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("envelope levels must be increasing".into()));
    }
    if !(window.0 < window.1) {
        return Err(Error::InvalidArgument("empty sample window".into()));
    }
    let mut rng = seed::stream(root, "verify/envelopes");
    let xs: Vec<f64> = (0..points).map(|_| rng.gen_range(window.0..window.1)).collect();
    let m_max = *m_values.last().expect("nonempty") as f64;
    let jumps = f.jump_points();
    // continuity points keep two windows of the finest level away from every jump
    let cont: Vec<f64> = xs.iter().copied().filter(|x| jumps.iter().all(|j| (x - j).abs() > 2.0 / m_max)).collect();
    let mut rows = Vec::new();
    for &m in m_values {
        let (lo, hi) = f.envelopes(m)?;
        let worst_violation = xs
            .iter()
            .map(|&x| {
                let v = f.eval(x);
                (lo.eval(x) - v).max(v - hi.eval(x))
            })
            .fold(f64::NEG_INFINITY, f64::max);
        let continuity_gap = cont.iter().map(|&x| hi.eval(x) - lo.eval(x)).fold(0.0, f64::max);
        rows.push(EnvelopeRow { m, worst_violation, continuity_gap });
    }
    let worst = rows.iter().map(|r| r.worst_violation).fold(f64::NEG_INFINITY, f64::max);
    let mut checks = vec![Check::new("envelope_sandwich", 1, 1.0, worst.max(0.0), 1e-12, format!("{points} points"))];
    let gaps: Vec<f64> = rows.iter().map(|r| r.continuity_gap).collect();
    let first = gaps[0];
    let last = *gaps.last().expect("nonempty");
    let non_increasing = gaps.windows(2).all(|w| w[1] <= w[0] + 1e-12);
    let mut c = Check::new(
        "envelope_gap_shrinks",
        1,
        1.0 / m_max,
        last,
        first / 8.0,
        format!("gaps {gaps:?} at {} continuity points", cont.len()),
    );
    c.passed = non_increasing && (last <= first / 8.0 || last <= 1e-12);
    checks.push(c);
    let parts = f.jordan_decompose();
    let mut bp = vec![window.0.min(f.breakpoints().first().copied().unwrap_or(0.0) - 1.0)];
    bp.extend_from_slice(f.breakpoints());
    bp.push(window.1.max(f.breakpoints().last().copied().unwrap_or(0.0) + 1.0));
    let mut jordan: f64 = 0.0;
    for w in bp.windows(2) {
        for k in 1..20 {
            let x = w[0] + (w[1] - w[0]) * k as f64 / 20.0;
            jordan = jordan.max((parts.a + parts.f1.eval(x) - parts.f2.eval(x) - f.eval(x)).abs());
        }
    }
    checks.push(Check::new("jordan_reconstruction", 1, 1.0, jordan, 1e-12, "piece interiors".into()));
    Ok((rows, checks))
}
