//! Product measures `mu_N = (prod_{k<=N} exp(-lambda_k f(x_k))) N(0, diag sigma^2) / Z_N`
//! on `R^D`, discretized coordinate by coordinate.
//!
//! The gradient form of a product measure splits into one-dimensional forms, so every
//! quantity below is assembled from per-coordinate matrices. Test functions are products
//! of one-dimensional shapes in the standardized variable `y = x_k / sigma_k`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{fitted_slope, gap_report, tail_non_increasing, ConvergenceReport, ConvergenceRow};
use crate::density::bv::{gaussian_boltzmann_factor, BvFunction};
use crate::density::DensitySpec;
use crate::error::{Error, Result};
use crate::forms::{assemble, AssemblyOptions, FormMatrices, MarkovReport};
use crate::quadrature::gauss_legendre01;
use crate::triangulation::GridSpec;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape1d {
    One,
    /// `y^power exp(-y^2 / (2 width^2))`.
    PolyBump { power: u32, width: f64 },
    /// `cos(freq y + phase) exp(-y^2 / (2 width^2))`.
    TrigBump { freq: f64, phase: f64, width: f64 },
    Cos { freq: f64 },
    Sin { freq: f64 },
}

impl Shape1d {
    pub fn eval(&self, y: f64) -> f64 {
        match *self {
            Shape1d::One => 1.0,
            Shape1d::PolyBump { power, width } => y.powi(power as i32) * (-y * y / (2.0 * width * width)).exp(),
            Shape1d::TrigBump { freq, phase, width } => (freq * y + phase).cos() * (-y * y / (2.0 * width * width)).exp(),
            Shape1d::Cos { freq } => (freq * y).cos(),
            Shape1d::Sin { freq } => (freq * y).sin(),
        }
    }

    pub fn deriv(&self, y: f64) -> f64 {
        match *self {
            Shape1d::One => 0.0,
            Shape1d::PolyBump { power, width } => {
                let w2 = width * width;
                let e = (-y * y / (2.0 * w2)).exp();
                let lead = if power == 0 { 0.0 } else { power as f64 * y.powi(power as i32 - 1) };
                (lead - y.powi(power as i32 + 1) / w2) * e
            }
            Shape1d::TrigBump { freq, phase, width } => {
                let w2 = width * width;
                let e = (-y * y / (2.0 * w2)).exp();
                (-freq * (freq * y + phase).sin() - y / w2 * (freq * y + phase).cos()) * e
            }
            Shape1d::Cos { freq } => -freq * (freq * y).sin(),
            Shape1d::Sin { freq } => freq * (freq * y).cos(),
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Shape1d::PolyBump { width, .. } | Shape1d::TrigBump { width, .. } => width > 0.0 && width.is_finite(),
            Shape1d::Cos { freq } | Shape1d::Sin { freq } => freq.is_finite(),
            Shape1d::One => true,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("bad shape parameters {self:?}")))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestFactor {
    /// 1-based coordinate.
    pub coordinate: usize,
    pub shape: Shape1d,
}

/// `x -> prod_k shape_k(x_k / sigma_k)`; coordinates not listed carry the constant 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProductTest {
    pub name: String,
    pub factors: Vec<TestFactor>,
}

impl ProductTest {
    pub fn new(name: &str, factors: &[(usize, Shape1d)]) -> Self {
        Self {
            name: name.into(),
            factors: factors.iter().map(|&(coordinate, shape)| TestFactor { coordinate, shape }).collect(),
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        let mut seen = vec![false; dim];
        for f in &self.factors {
            if f.coordinate == 0 || f.coordinate > dim {
                return Err(Error::InvalidArgument(format!(
                    "test '{}': coordinate {} outside 1..={dim}",
                    self.name, f.coordinate
                )));
            }
            if std::mem::replace(&mut seen[f.coordinate - 1], true) {
                return Err(Error::InvalidArgument(format!("test '{}': coordinate {} repeated", self.name, f.coordinate)));
            }
            f.shape.validate()?;
        }
        Ok(())
    }

    /// Shape on 0-based coordinate `k`.
    pub fn shape(&self, k: usize) -> Shape1d {
        self.factors.iter().find(|f| f.coordinate == k + 1).map(|f| f.shape).unwrap_or(Shape1d::One)
    }

    /// 0-based coordinates with a non-constant shape.
    pub fn active(&self) -> Vec<usize> {
        let mut v: Vec<usize> =
            self.factors.iter().filter(|f| f.shape != Shape1d::One).map(|f| f.coordinate - 1).collect();
        v.sort_unstable();
        v
    }

    pub fn eval(&self, x: &[f64], scales: &[f64]) -> f64 {
        self.factors.iter().map(|f| f.shape.eval(x[f.coordinate - 1] / scales[f.coordinate - 1])).product()
    }
}

/// Centered Gaussian with independent coordinates, perturbed by `sum_k lambda_k f(x_k)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BvGaussianModel {
    pub variances: Vec<f64>,
    pub f: BvFunction,
    pub weights: Vec<f64>,
}

impl BvGaussianModel {
    pub fn new(variances: Vec<f64>, f: BvFunction, weights: Vec<f64>) -> Result<Self> {
        if variances.is_empty() || variances.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidArgument("variances must be positive and finite".into()));
        }
        if weights.len() != variances.len() || weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidArgument("need one finite nonnegative weight per coordinate".into()));
        }
        Ok(Self { variances, f, weights })
    }

    pub fn dim(&self) -> usize {
        self.variances.len()
    }

    pub fn scales(&self) -> Vec<f64> {
        self.variances.iter().map(|v| v.sqrt()).collect()
    }

    /// One-dimensional factor of coordinate `k` (0-based), perturbed or not.
    pub fn factor_density(&self, k: usize, perturbed: bool) -> Result<DensitySpec> {
        let base = DensitySpec::gaussian(vec![0.0], vec![self.variances[k]])?;
        if perturbed && self.weights[k] > 0.0 {
            DensitySpec::bv_perturbed(base, self.f.clone(), vec![self.weights[k]])
        } else {
            Ok(base)
        }
    }

    /// `Z_N = int exp(-Q_f(P_N x)) N(0, diag sigma^2)(dx)`.
    pub fn partition_function(&self, n_active: usize) -> Result<f64> {
        crate::density::bv::partition_function_exact(&self.f, &self.weights, &self.variances, n_active)
    }

    /// `int g(P_N x) exp(-Q_f(P_N x)) N(dx)` for a product `g`, by one-dimensional quadrature.
    pub fn weighted_integral(&self, g: &ProductTest, n_active: usize) -> Result<f64> {
        let scales = self.scales();
        let mut total = 1.0;
        for k in 0..self.dim() {
            let shape = g.shape(k);
            let lam = self.weights[k];
            total *= if k < n_active {
                let rho = self.factor_density(k, true)?;
                let z = if lam > 0.0 { gaussian_boltzmann_factor(&self.f, lam, self.variances[k]) } else { 1.0 };
                z * factor_integral(&rho, |x| shape.eval(x / scales[k]))
            } else {
                shape.eval(0.0) * (-lam * self.f.eval(0.0)).exp()
            };
        }
        Ok(total)
    }
}

/// `int g rho dx` over the support box of a one-dimensional density, on panels of
/// 20-point Gauss-Legendre split at the density breakpoints.
pub fn factor_integral(rho: &DensitySpec, g: impl Fn(f64) -> f64) -> f64 {
    let (lo, hi) = (rho.support_lo[0], rho.support_hi[0]);
    let mut cuts = vec![lo];
    cuts.extend(rho.axis_breakpoints(0).into_iter().filter(|b| *b > lo && *b < hi));
    cuts.push(hi);
    cuts.sort_by(f64::total_cmp);
    let (x, w) = gauss_legendre01(20);
    let mut s = 0.0;
    for seg in cuts.windows(2) {
        let panels = 64;
        let h = (seg[1] - seg[0]) / panels as f64;
        for p in 0..panels {
            let a = seg[0] + p as f64 * h;
            for (xi, wi) in x.iter().zip(&w) {
                let t = a + xi * h;
                s += wi * h * g(t) * rho.eval(&[t]);
            }
        }
    }
    s
}

/// Per-coordinate forms of `mu_N` on grids of width `r_std sigma_k`.
#[derive(Clone, Debug)]
pub struct ProductForms {
    pub active: usize,
    pub r_std: f64,
    pub scales: Vec<f64>,
    pub densities: Vec<DensitySpec>,
    pub factors: Vec<FormMatrices>,
}

impl ProductForms {
    pub fn build(model: &BvGaussianModel, active: usize, r_std: f64, opts: &AssemblyOptions) -> Result<Self> {
        if !(r_std > 0.0) {
            return Err(Error::InvalidArgument(format!("grid width must be positive, got {r_std}")));
        }
        let scales = model.scales();
        let densities = (0..model.dim()).map(|k| model.factor_density(k, k < active)).collect::<Result<Vec<_>>>()?;
        let factors = densities
            .par_iter()
            .zip(&scales)
            .map(|(rho, s)| {
                let grid = GridSpec::covering(r_std * s, &rho.support_lo, &rho.support_hi)?;
                assemble(&grid, rho, opts)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { active, r_std, scales, densities, factors })
    }

    pub fn dim(&self) -> usize {
        self.factors.len()
    }

    /// Nodal vector of the shape of `t` on coordinate `k`.
    pub fn nodal(&self, t: &ProductTest, k: usize) -> Vec<f64> {
        let shape = t.shape(k);
        let s = self.scales[k];
        self.factors[k].interpolate(|x| shape.eval(x[0] / s))
    }

    fn factor_inner(&self, a: &ProductTest, b: &ProductTest, k: usize) -> f64 {
        self.factors[k].l2_inner(&self.nodal(a, k), &self.nodal(b, k))
    }

    /// `<Psi a, Psi b>` in the discrete `L^2(mu_N)`.
    pub fn inner(&self, a: &ProductTest, b: &ProductTest) -> f64 {
        (0..self.dim()).map(|k| self.factor_inner(a, b, k)).product()
    }

    /// `E(Psi u, Psi u) = sum_k E_k(u_k, u_k) prod_{j != k} |u_j|^2`.
    pub fn energy(&self, u: &ProductTest) -> f64 {
        let nodal: Vec<Vec<f64>> = (0..self.dim()).map(|k| self.nodal(u, k)).collect();
        let norms: Vec<f64> = (0..self.dim()).map(|k| self.factors[k].l2_inner(&nodal[k], &nodal[k])).collect();
        u.active()
            .into_iter()
            .map(|k| {
                let e = self.factors[k].energy(&nodal[k], &nodal[k]);
                e * (0..self.dim()).filter(|&j| j != k).map(|j| norms[j]).product::<f64>()
            })
            .sum()
    }

    /// `G_alpha Psi phi` for a test acting on at most one coordinate: `(k, u_k)`, or
    /// `None` for a constant test.
    pub fn resolvent_factor(&self, alpha: f64, phi: &ProductTest) -> Result<Option<(usize, Vec<f64>)>> {
        match phi.active().as_slice() {
            [] => Ok(None),
            [k] => Ok(Some((*k, self.factors[*k].resolvent(alpha, &self.nodal(phi, *k))?.u))),
            more => Err(Error::InvalidArgument(format!(
                "resolvent of '{}' needs a test acting on one coordinate, got {}",
                phi.name,
                more.len()
            ))),
        }
    }

    /// `<G_alpha Psi phi, Psi psi>`, and `E(G_alpha Psi phi, G_alpha Psi phi)`.
    pub fn resolvent_stats(&self, alpha: f64, phi: &ProductTest, psis: &[ProductTest]) -> Result<(Vec<f64>, f64)> {
        let c = |k: usize| phi.shape(k).eval(0.0);
        let constant_of = |k: usize| -> Vec<f64> { vec![c(k); self.factors[k].len()] };
        let g = self.resolvent_factor(alpha, phi)?;
        let factor_vec = |k: usize| -> Vec<f64> {
            match &g {
                Some((a, u)) if *a == k => u.clone(),
                // constant shapes pass through; the scalar 1/alpha is applied once below
                _ => constant_of(k),
            }
        };
        let scale = if g.is_none() { 1.0 / alpha } else { 1.0 };
        let vecs: Vec<Vec<f64>> = (0..self.dim()).map(factor_vec).collect();
        let pairings = psis
            .iter()
            .map(|psi| {
                scale * (0..self.dim()).map(|k| self.factors[k].l2_inner(&vecs[k], &self.nodal(psi, k))).product::<f64>()
            })
            .collect();
        let energy = match &g {
            None => 0.0,
            Some((a, u)) => {
                self.factors[*a].energy(u, u)
                    * (0..self.dim())
                        .filter(|j| j != a)
                        .map(|j| self.factors[j].l2_inner(&vecs[j], &vecs[j]))
                        .product::<f64>()
            }
        };
        Ok((pairings, energy))
    }

    pub fn markov(&self, alpha: f64, trials: usize, seed: u64) -> Result<Vec<MarkovReport>> {
        self.factors
            .iter()
            .enumerate()
            .map(|(k, f)| f.markov_check(alpha, trials, crate::seed::derive(seed, &format!("markov/{k}"))))
            .collect()
    }
}

/// How the sequence is discretized.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceSpec {
    /// Active coordinates `N` of each member.
    pub n_values: Vec<usize>,
    /// Standardized grid width of each member.
    pub r_std: Vec<f64>,
    /// Width of the reference grid; default a quarter of the finest member width.
    pub r_limit: Option<f64>,
    #[serde(default)]
    pub lumped: bool,
}

pub struct ProductSequence {
    pub model: BvGaussianModel,
    pub members: Vec<ProductForms>,
    pub limit: ProductForms,
}

impl ProductSequence {
    pub fn build(model: &BvGaussianModel, spec: &SequenceSpec) -> Result<Self> {
        if spec.n_values.is_empty() || spec.n_values.len() != spec.r_std.len() {
            return Err(Error::InvalidArgument("need one grid width per member and at least one member".into()));
        }
        if spec.n_values.iter().any(|&n| n == 0 || n > model.dim()) {
            return Err(Error::InvalidArgument(format!("active coordinates must lie in 1..={}", model.dim())));
        }
        let rmin = spec.r_std.iter().cloned().fold(f64::INFINITY, f64::min);
        let r_limit = spec.r_limit.unwrap_or(rmin / 4.0);
        let opts = AssemblyOptions { lumped: spec.lumped, ..Default::default() };
        let members = spec
            .n_values
            .iter()
            .zip(&spec.r_std)
            .map(|(&n, &r)| ProductForms::build(model, n, r, &opts))
            .collect::<Result<Vec<_>>>()?;
        let limit = ProductForms::build(model, model.dim(), r_limit, &opts)?;
        // supports of the members sit inside the reference support
        for m in &members {
            for (a, b) in m.densities.iter().zip(&limit.densities) {
                if a.support_lo[0] < b.support_lo[0] || a.support_hi[0] > b.support_hi[0] {
                    return Err(Error::InvalidArgument("member support exceeds the reference support".into()));
                }
            }
        }
        Ok(Self { model: model.clone(), members, limit })
    }

    fn row_scale(&self, i: usize) -> f64 {
        self.members[i].r_std
    }
}

/// `<G_alpha Psi_N phi_i, Psi_N phi_j>_N` against the reference, gap = max over `(i, j)`;
/// the norm column tracks `|G_alpha Psi_N phi_i|`.
pub fn resolvent_pairings(seq: &ProductSequence, alpha: f64, tests: &[ProductTest], tolerance: f64) -> Result<ConvergenceReport> {
    let stats = |pf: &ProductForms| -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
        let mut pairs = Vec::new();
        let mut norms = Vec::new();
        for phi in tests {
            let (p, _) = pf.resolvent_stats(alpha, phi, tests)?;
            let (q, _) = pf.resolvent_stats(alpha, phi, std::slice::from_ref(phi))?;
            pairs.push(p);
            norms.push(q[0]);
        }
        Ok((pairs, norms))
    };
    let (lp, ln) = stats(&seq.limit)?;
    let mut rows = Vec::new();
    for (i, m) in seq.members.iter().enumerate() {
        let (p, n) = stats(m)?;
        let pairing_gap = p
            .iter()
            .flatten()
            .zip(lp.iter().flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let norm_gap = n.iter().zip(&ln).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        rows.push(ConvergenceRow { index: m.active, scale: seq.row_scale(i), pairing_gap, norm_gap });
    }
    Ok(gap_report("resolvent pairings", rows, tolerance))
}

/// `<Psi_N phi_i, Psi_N phi_j>_N` against `<phi_i, phi_j>` on the reference.
pub fn embedding_report(seq: &ProductSequence, tests: &[ProductTest], tolerance: f64) -> ConvergenceReport {
    let gram = |pf: &ProductForms| -> Vec<Vec<f64>> {
        tests.iter().map(|a| tests.iter().map(|b| pf.inner(a, b)).collect()).collect()
    };
    let lg = gram(&seq.limit);
    let rows = seq
        .members
        .iter()
        .enumerate()
        .map(|(i, m)| {
            let g = gram(m);
            let pairing_gap =
                g.iter().flatten().zip(lg.iter().flatten()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            let norm_gap = (0..tests.len()).map(|j| (g[j][j].sqrt() - lg[j][j].sqrt()).abs()).fold(0.0, f64::max);
            ConvergenceRow { index: m.active, scale: seq.row_scale(i), pairing_gap, norm_gap }
        })
        .collect();
    gap_report("embedding", rows, tolerance)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyRow {
    pub n: usize,
    pub r_std: f64,
    pub energy: f64,
    pub gap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoveryReport {
    pub test: String,
    pub rows: Vec<EnergyRow>,
    pub limit_energy: f64,
    /// The same energy by dense quadrature of the exact gradient against the limit measure.
    pub quadrature_energy: f64,
    pub slope: Option<f64>,
    pub tolerance: f64,
    pub passed: bool,
}

/// Exact `E(u, u)` under `mu_inf` by one-dimensional quadrature of the product.
pub fn quadrature_energy(seq: &ProductSequence, u: &ProductTest) -> f64 {
    let lim = &seq.limit;
    let d = lim.dim();
    let norms: Vec<f64> = (0..d)
        .map(|k| {
            let s = u.shape(k);
            let sc = lim.scales[k];
            factor_integral(&lim.densities[k], |x| s.eval(x / sc).powi(2))
        })
        .collect();
    u.active()
        .into_iter()
        .map(|k| {
            let s = u.shape(k);
            let sc = lim.scales[k];
            let e = factor_integral(&lim.densities[k], |x| (s.deriv(x / sc) / sc).powi(2));
            e * (0..d).filter(|&j| j != k).map(|j| norms[j]).product::<f64>()
        })
        .sum()
}

/// Energies of `Psi_N u` against the reference; passes when the gap is non-increasing over
/// the tail and within tolerance at the last member.
pub fn m2_recovery_diagnostic(seq: &ProductSequence, u: &ProductTest, tolerance: f64) -> RecoveryReport {
    let limit_energy = seq.limit.energy(u);
    let rows: Vec<EnergyRow> = seq
        .members
        .iter()
        .map(|m| {
            let e = m.energy(u);
            EnergyRow { n: m.active, r_std: m.r_std, energy: e, gap: (e - limit_energy).abs() }
        })
        .collect();
    let gaps: Vec<f64> = rows.iter().map(|r| r.gap).collect();
    let scales: Vec<f64> = rows.iter().map(|r| r.r_std).collect();
    let passed = tail_non_increasing(&gaps, tolerance) && gaps.last().is_some_and(|g| *g <= tolerance);
    RecoveryReport {
        test: u.name.clone(),
        slope: fitted_slope(&scales, &gaps),
        quadrature_energy: quadrature_energy(seq, u),
        limit_energy,
        rows,
        tolerance,
        passed,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LiminfRow {
    pub n: usize,
    pub energy: f64,
    /// `E^N(u_N, u_N) - E(u*, u*)`.
    pub slack: f64,
    /// `|<u_N, Psi_N psi> - <u*, psi>|` per test `psi`.
    pub pairing_gaps: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LiminfReport {
    pub test: String,
    pub alpha: f64,
    pub rows: Vec<LiminfRow>,
    pub limit_energy: f64,
    /// `E(u*, u*) - min over the tail of E^N(u_N, u_N)`.
    pub tail_deficit: f64,
    pub from_n: usize,
    pub slack_tolerance: f64,
    pub passed: bool,
}

/// `u_N = G_alpha^N Psi_N f` against `u* = G_alpha f` on the reference: the energies must
/// not fall below the limit energy by more than `slack_tolerance` for `N >= from_n`.
pub fn m1_liminf_diagnostic(
    seq: &ProductSequence,
    f: &ProductTest,
    alpha: f64,
    psis: &[ProductTest],
    from_n: usize,
    slack_tolerance: f64,
) -> Result<LiminfReport> {
    let (lp, limit_energy) = seq.limit.resolvent_stats(alpha, f, psis)?;
    let mut rows = Vec::new();
    for m in &seq.members {
        let (p, e) = m.resolvent_stats(alpha, f, psis)?;
        rows.push(LiminfRow {
            n: m.active,
            energy: e,
            slack: e - limit_energy,
            pairing_gaps: p.iter().zip(&lp).map(|(a, b)| (a - b).abs()).collect(),
        });
    }
    let tail = &rows[super::tail_start(rows.len())..];
    let tail_deficit = limit_energy - tail.iter().map(|r| r.energy).fold(f64::INFINITY, f64::min);
    let passed = rows.iter().filter(|r| r.n >= from_n).all(|r| r.slack >= -slack_tolerance);
    Ok(LiminfReport {
        test: f.name.clone(),
        alpha,
        rows,
        limit_energy,
        tail_deficit,
        from_n,
        slack_tolerance,
        passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shapes() -> Vec<Shape1d> {
        vec![
            Shape1d::PolyBump { power: 0, width: 1.0 },
            Shape1d::PolyBump { power: 3, width: 0.7 },
            Shape1d::TrigBump { freq: 2.0, phase: 0.3, width: 1.2 },
            Shape1d::Cos { freq: 1.5 },
            Shape1d::Sin { freq: 0.5 },
        ]
    }

    #[test]
    fn shape_derivatives_match_differences() {
        for s in shapes() {
            for y in [-1.7, -0.2, 0.4, 2.3] {
                let h = 1e-6;
                let fd = (s.eval(y + h) - s.eval(y - h)) / (2.0 * h);
                assert!((fd - s.deriv(y)).abs() < 1e-7, "{s:?} at {y}");
            }
        }
    }

    #[test]
    fn test_validation() {
        let t = ProductTest::new("t", &[(1, Shape1d::Cos { freq: 1.0 }), (1, Shape1d::One)]);
        assert!(t.validate(2).is_err());
        let t = ProductTest::new("t", &[(3, Shape1d::Cos { freq: 1.0 })]);
        assert!(t.validate(2).is_err());
        let t = ProductTest::new("t", &[(2, Shape1d::PolyBump { power: 1, width: 0.0 })]);
        assert!(t.validate(2).is_err());
    }

    fn small_model(f: BvFunction) -> BvGaussianModel {
        BvGaussianModel::new(vec![1.0, 0.25], f, vec![0.5, 0.5]).unwrap()
    }

    #[test]
    fn weighted_integral_of_one_is_partition_function() {
        let m = small_model(BvFunction::positive_indicator());
        let one = ProductTest::new("one", &[]);
        for n in 0..=2 {
            let a = m.weighted_integral(&one, n).unwrap();
            let b = m.partition_function(n).unwrap();
            // the factor densities drop the Gaussian tail beyond the truncation box
            assert!((a - b).abs() < 1e-9 * b, "{a} {b}");
        }
    }

    #[test]
    fn product_energy_matches_quadrature() {
        let m = small_model(BvFunction::positive_indicator());
        let spec = SequenceSpec { n_values: vec![2], r_std: vec![1.0 / 64.0], r_limit: Some(1.0 / 128.0), lumped: false };
        let seq = ProductSequence::build(&m, &spec).unwrap();
        let u = ProductTest::new(
            "u",
            &[(1, Shape1d::TrigBump { freq: 1.0, phase: 0.0, width: 1.0 }), (2, Shape1d::PolyBump { power: 1, width: 1.0 })],
        );
        let e = seq.limit.energy(&u);
        let q = quadrature_energy(&seq, &u);
        assert!((e - q).abs() < 1e-3 * q, "{e} {q}");
        // inner product of the constant is the mass, close to one
        let one = ProductTest::new("one", &[]);
        assert!((seq.limit.inner(&one, &one) - 1.0).abs() < 1e-8);
    }

    #[test]
    fn constant_resolvent_and_factorized_pairing() {
        let m = small_model(BvFunction::constant(0.0));
        let spec = SequenceSpec { n_values: vec![1], r_std: vec![1.0 / 16.0], r_limit: None, lumped: false };
        let seq = ProductSequence::build(&m, &spec).unwrap();
        let pf = &seq.members[0];
        let one = ProductTest::new("one", &[]);
        let psi = ProductTest::new("psi", &[(2, Shape1d::Cos { freq: 1.0 })]);
        let (p, e) = pf.resolvent_stats(2.0, &one, std::slice::from_ref(&psi)).unwrap();
        assert_eq!(e, 0.0);
        assert!((p[0] - 0.5 * pf.inner(&one, &psi)).abs() < 1e-14);
        // first Hermite function on coordinate 2: x / sigma, eigenvalue 1 / sigma^2 = 4
        let x = ProductTest::new("x", &[(2, Shape1d::PolyBump { power: 1, width: 1e6 })]);
        let (p, _) = pf.resolvent_stats(1.0, &x, std::slice::from_ref(&x)).unwrap();
        let want = pf.inner(&x, &x) / 5.0;
        assert!((p[0] - want).abs() < 2e-3 * want, "{} {want}", p[0]);
        let two = ProductTest::new("two", &[(1, Shape1d::Cos { freq: 1.0 }), (2, Shape1d::Cos { freq: 1.0 })]);
        assert!(pf.resolvent_factor(1.0, &two).is_err());
    }
}
