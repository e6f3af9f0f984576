//! Bounded-variation functions on the line with finitely many pieces.
//!
//! A function is given by strictly increasing breakpoints `b_0 < ... < b_{n-1}`, its
//! value at each breakpoint, and `n + 1` affine pieces on the open gaps
//! `(-inf, b_0), (b_0, b_1), ..., (b_{n-1}, inf)`. Piece `k` reads
//! `value + slope * (x - b_{k-1})`; the two unbounded pieces are constant.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AffinePiece {
    /// Limit at the left end of the gap (the constant for the first gap).
    pub value: f64,
    #[serde(default)]
    pub slope: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BvDoc", into = "BvDoc")]
pub struct BvFunction {
    breakpoints: Vec<f64>,
    values_at: Vec<f64>,
    pieces: Vec<AffinePiece>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BvDoc {
    #[serde(default)]
    breakpoints: Vec<f64>,
    #[serde(default)]
    values_at: Vec<f64>,
    pieces: Vec<AffinePiece>,
}

impl TryFrom<BvDoc> for BvFunction {
    type Error = Error;
    fn try_from(d: BvDoc) -> Result<Self> {
        BvFunction::new(d.breakpoints, d.values_at, d.pieces)
    }
}

impl From<BvFunction> for BvDoc {
    fn from(f: BvFunction) -> Self {
        BvDoc { breakpoints: f.breakpoints, values_at: f.values_at, pieces: f.pieces }
    }
}

impl BvFunction {
    pub fn new(breakpoints: Vec<f64>, values_at: Vec<f64>, pieces: Vec<AffinePiece>) -> Result<Self> {
        let n = breakpoints.len();
        if values_at.len() != n || pieces.len() != n + 1 {
            return Err(Error::InvalidBv(format!(
                "{n} breakpoints need {n} point values and {} pieces",
                n + 1
            )));
        }
        if breakpoints.iter().any(|b| !b.is_finite()) || breakpoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidBv("breakpoints must be finite and strictly increasing".into()));
        }
        if pieces[0].slope != 0.0 || pieces[n].slope != 0.0 {
            return Err(Error::InvalidBv("unbounded pieces must be constant".into()));
        }
        if values_at.iter().chain(pieces.iter().flat_map(|p| [&p.value, &p.slope])).any(|v| !v.is_finite()) {
            return Err(Error::InvalidBv("values must be finite".into()));
        }
        Ok(Self { breakpoints, values_at, pieces })
    }

    pub fn constant(c: f64) -> Self {
        Self { breakpoints: vec![], values_at: vec![], pieces: vec![AffinePiece { value: c, slope: 0.0 }] }
    }

    /// `left` below `at`, `right` above it, `at_value` at the point itself.
    pub fn step(at: f64, left: f64, at_value: f64, right: f64) -> Self {
        Self::new(
            vec![at],
            vec![at_value],
            vec![AffinePiece { value: left, slope: 0.0 }, AffinePiece { value: right, slope: 0.0 }],
        )
        .expect("a single step is valid")
    }

    /// `1_(0, inf)`.
    pub fn positive_indicator() -> Self {
        Self::step(0.0, 0.0, 0.0, 1.0)
    }

    /// Right-continuous staircase: value `levels[k]` on `[b_{k-1}, b_k)`.
    pub fn staircase(breakpoints: Vec<f64>, levels: Vec<f64>) -> Result<Self> {
        if levels.len() != breakpoints.len() + 1 {
            return Err(Error::InvalidBv("staircase needs one more level than breakpoints".into()));
        }
        let values_at = levels[1..].to_vec();
        let pieces = levels.iter().map(|&v| AffinePiece { value: v, slope: 0.0 }).collect();
        Self::new(breakpoints, values_at, pieces)
    }

    /// Continuous clamp of `x` into `[a, b]`, scaled by `c`.
    pub fn ramp(a: f64, b: f64, c: f64) -> Result<Self> {
        if !(a < b) {
            return Err(Error::InvalidBv("ramp needs a < b".into()));
        }
        Self::new(
            vec![a, b],
            vec![c * a, c * b],
            vec![
                AffinePiece { value: c * a, slope: 0.0 },
                AffinePiece { value: c * a, slope: c },
                AffinePiece { value: c * b, slope: 0.0 },
            ],
        )
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn pieces(&self) -> &[AffinePiece] {
        &self.pieces
    }

    pub fn values_at(&self) -> &[f64] {
        &self.values_at
    }

    /// Gap `k` as `(lo, hi)` with infinite ends for the outer gaps.
    fn gap(&self, k: usize) -> (f64, f64) {
        let lo = if k == 0 { f64::NEG_INFINITY } else { self.breakpoints[k - 1] };
        let hi = self.breakpoints.get(k).copied().unwrap_or(f64::INFINITY);
        (lo, hi)
    }

    fn piece_value(&self, k: usize, x: f64) -> f64 {
        let p = self.pieces[k];
        if k == 0 || p.slope == 0.0 {
            p.value
        } else {
            p.value + p.slope * (x - self.breakpoints[k - 1])
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self.breakpoints.binary_search_by(|b| b.total_cmp(&x)) {
            Ok(k) => self.values_at[k],
            Err(k) => self.piece_value(k, x),
        }
    }

    pub fn left_limit(&self, k: usize) -> f64 {
        self.piece_value(k, self.breakpoints[k])
    }

    pub fn right_limit(&self, k: usize) -> f64 {
        self.pieces[k + 1].value
    }

    pub fn sup_norm(&self) -> f64 {
        let mut m: f64 = 0.0;
        for k in 0..self.pieces.len() {
            let (lo, hi) = self.gap(k);
            m = m.max(self.pieces[k].value.abs());
            if hi.is_finite() && lo.is_finite() {
                m = m.max(self.piece_value(k, hi).abs());
            }
        }
        self.values_at.iter().fold(m, |m, v| m.max(v.abs()))
    }

    pub fn total_variation(&self) -> f64 {
        let mut tv = 0.0;
        for k in 0..self.breakpoints.len() {
            let v = self.values_at[k];
            tv += (v - self.left_limit(k)).abs() + (self.right_limit(k) - v).abs();
            if k + 1 < self.breakpoints.len() {
                tv += self.pieces[k + 1].slope.abs() * (self.breakpoints[k + 1] - self.breakpoints[k]);
            }
        }
        tv
    }

    /// Discontinuity points.
    pub fn jump_points(&self) -> Vec<f64> {
        (0..self.breakpoints.len())
            .filter(|&k| {
                let v = self.values_at[k];
                v != self.left_limit(k) || v != self.right_limit(k)
            })
            .map(|k| self.breakpoints[k])
            .collect()
    }

    fn window_values(&self, a: f64, b: f64) -> Vec<f64> {
        let mut vals = vec![self.eval(a), self.eval(b)];
        for (k, &bk) in self.breakpoints.iter().enumerate() {
            if bk > a && bk < b {
                vals.push(self.values_at[k]);
            }
        }
        for k in 0..self.pieces.len() {
            let (lo, hi) = self.gap(k);
            let (l, h) = (lo.max(a), hi.min(b));
            if l < h {
                vals.push(self.piece_value(k, l));
                vals.push(self.piece_value(k, h));
            }
        }
        vals
    }

    /// Exact infimum over the closed window `[a, b]`.
    pub fn inf_on(&self, a: f64, b: f64) -> f64 {
        self.window_values(a, b).into_iter().fold(f64::INFINITY, f64::min)
    }

    pub fn sup_on(&self, a: f64, b: f64) -> f64 {
        self.window_values(a, b).into_iter().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `f = a + f1 - f2` with `f1`, `f2` increasing, vanishing at `-inf`, bounded by TV.
    pub fn jordan_decompose(&self) -> JordanParts {
        let n = self.breakpoints.len();
        let a = self.pieces[0].value;
        let zero = AffinePiece { value: 0.0, slope: 0.0 };
        let mut p1 = vec![zero; n + 1];
        let mut p2 = vec![zero; n + 1];
        let mut v1 = vec![0.0; n];
        let mut v2 = vec![0.0; n];
        let (mut pos, mut neg) = (0.0, 0.0);
        for k in 0..n {
            if k > 0 {
                let s = self.pieces[k].slope;
                let len = self.breakpoints[k] - self.breakpoints[k - 1];
                pos += s.max(0.0) * len;
                neg += (-s).max(0.0) * len;
            }
            let j1 = self.values_at[k] - self.left_limit(k);
            pos += j1.max(0.0);
            neg += (-j1).max(0.0);
            v1[k] = pos;
            v2[k] = neg;
            let j2 = self.right_limit(k) - self.values_at[k];
            pos += j2.max(0.0);
            neg += (-j2).max(0.0);
            let s = self.pieces[k + 1].slope;
            p1[k + 1] = AffinePiece { value: pos, slope: s.max(0.0) };
            p2[k + 1] = AffinePiece { value: neg, slope: (-s).max(0.0) };
        }
        JordanParts {
            a,
            f1: BvFunction::new(self.breakpoints.clone(), v1, p1).expect("same layout"),
            f2: BvFunction::new(self.breakpoints.clone(), v2, p2).expect("same layout"),
        }
    }

    /// Window-infimum and window-supremum tent envelopes at mesh `1/m`.
    pub fn envelopes(&self, m: usize) -> Result<(PlCurve, PlCurve)> {
        if m == 0 {
            return Err(Error::InvalidArgument("envelope index m must be >= 1".into()));
        }
        let h = 1.0 / m as f64;
        let (lo_idx, hi_idx) = match (self.breakpoints.first(), self.breakpoints.last()) {
            (Some(&a), Some(&b)) => ((a / h).floor() as i64 - 2, (b / h).ceil() as i64 + 2),
            _ => (0, 0),
        };
        let nodes: Vec<f64> = (lo_idx..=hi_idx).map(|k| k as f64 * h).collect();
        let left = self.pieces[0].value;
        let right = self.pieces[self.pieces.len() - 1].value;
        let lower = nodes.iter().map(|&x| self.inf_on(x - h, x + h)).collect();
        let upper = nodes.iter().map(|&x| self.sup_on(x - h, x + h)).collect();
        Ok((
            PlCurve { h, first: lo_idx, values: lower, left, right },
            PlCurve { h, first: lo_idx, values: upper, left, right },
        ))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct JordanParts {
    pub a: f64,
    pub f1: BvFunction,
    pub f2: BvFunction,
}

/// Continuous piecewise-linear curve with nodal values at `(first + k) h` and
/// constant extension beyond the stored range.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PlCurve {
    pub h: f64,
    pub first: i64,
    pub values: Vec<f64>,
    pub left: f64,
    pub right: f64,
}

impl PlCurve {
    pub fn node_value(&self, k: i64) -> f64 {
        if k < self.first {
            self.left
        } else {
            let i = (k - self.first) as usize;
            self.values.get(i).copied().unwrap_or(self.right)
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let y = x / self.h;
        let k = y.floor();
        let t = y - k;
        let k = k as i64;
        (1.0 - t) * self.node_value(k) + t * self.node_value(k + 1)
    }
}

/// `Q_f(h) = sum_k lambda_k f(h_k)`.
pub fn potential_q(f: &BvFunction, lambda: &[f64], h: &[f64]) -> Result<f64> {
    if lambda.len() != h.len() {
        return Err(Error::DimensionMismatch { expected: lambda.len(), got: h.len() });
    }
    if lambda.iter().any(|l| !(*l >= 0.0) || !l.is_finite()) {
        return Err(Error::InvalidArgument("weights must be finite and nonnegative".into()));
    }
    Ok(lambda.iter().zip(h).map(|(l, &x)| l * f.eval(x)).sum())
}

fn normal_cdf(z: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-z / std::f64::consts::SQRT_2)
}

/// `int exp(-lambda f(x)) N(0, var)(dx)` in closed form, piece by piece.
pub fn gaussian_boltzmann_factor(f: &BvFunction, lambda: f64, var: f64) -> f64 {
    let s = var.sqrt();
    let mut z = 0.0;
    for k in 0..f.pieces.len() {
        let (lo, hi) = f.gap(k);
        let p = f.pieces[k];
        if k == 0 || p.slope == 0.0 {
            z += (-lambda * p.value).exp() * (normal_cdf(hi / s) - normal_cdf(lo / s));
        } else {
            // exp(-l(c + a(x - b))) against the Gaussian: complete the square
            let b = lo;
            let a = p.slope;
            let shift = lambda * a * var;
            let pre = (-lambda * (p.value - a * b) + 0.5 * lambda * lambda * a * a * var).exp();
            z += pre * (normal_cdf((hi + shift) / s) - normal_cdf((lo + shift) / s));
        }
    }
    z
}

/// Exact `Z_N` for a centered diagonal Gaussian: inactive coordinates sit at `0`.
pub fn partition_function_exact(f: &BvFunction, lambda: &[f64], var: &[f64], n_active: usize) -> Result<f64> {
    if lambda.len() != var.len() || n_active > var.len() {
        return Err(Error::InvalidArgument("need N <= D and matching weight/variance lengths".into()));
    }
    let mut z = 1.0;
    for k in 0..var.len() {
        z *= if k < n_active {
            gaussian_boltzmann_factor(f, lambda[k], var[k])
        } else {
            (-lambda[k] * f.eval(0.0)).exp()
        };
    }
    Ok(z)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MonteCarloEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub samples: usize,
}

/// Monte Carlo `Z_N = E[exp(-Q_f(P_N X))]`, `X ~ N(0, diag var)`.
pub fn partition_function(
    f: &BvFunction,
    lambda: &[f64],
    var: &[f64],
    n_active: usize,
    samples: usize,
    seed: u64,
) -> Result<MonteCarloEstimate> {
    weighted_expectation(f, lambda, var, n_active, samples, seed, |_| 1.0)
}

/// Monte Carlo `E[g(P_N X) exp(-Q_f(P_N X))]`.
pub fn weighted_expectation<G: Fn(&[f64]) -> f64>(
    f: &BvFunction,
    lambda: &[f64],
    var: &[f64],
    n_active: usize,
    samples: usize,
    seed: u64,
    g: G,
) -> Result<MonteCarloEstimate> {
    if samples < 2 {
        return Err(Error::InvalidArgument("Monte Carlo needs at least two samples".into()));
    }
    if lambda.len() != var.len() || n_active > var.len() {
        return Err(Error::InvalidArgument("need N <= D and matching weight/variance lengths".into()));
    }
    let dim = var.len();
    let sd: Vec<f64> = var.iter().map(|v| v.sqrt()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = vec![0.0; dim];
    let (mut mean, mut m2) = (0.0, 0.0);
    for n in 0..samples {
        for k in 0..dim {
            let z: f64 = StandardNormal.sample(&mut rng);
            x[k] = if k < n_active { sd[k] * z } else { 0.0 };
        }
        let q = potential_q(f, lambda, &x)?;
        let v = g(&x) * (-q).exp();
        // Welford
        let delta = v - mean;
        mean += delta / (n + 1) as f64;
        m2 += delta * (v - mean);
    }
    let var_hat = m2 / (samples - 1) as f64;
    Ok(MonteCarloEstimate { mean, stderr: (var_hat / samples as f64).sqrt(), samples })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn staircase() -> BvFunction {
        // jumps +1, -2, +1 at 0, 1, 2
        BvFunction::staircase(vec![0.0, 1.0, 2.0], vec![0.0, 1.0, -1.0, 0.0]).unwrap()
    }

    #[test]
    fn evaluation_and_variation() {
        let f = BvFunction::positive_indicator();
        assert_eq!(f.eval(0.0), 0.0);
        assert_eq!(f.eval(1e-300), 1.0);
        assert_eq!(f.total_variation(), 1.0);
        assert_eq!(f.jump_points(), vec![0.0]);
        let s = staircase();
        assert_eq!(s.total_variation(), 4.0);
        assert_eq!(s.eval(1.0), -1.0);
        let r = BvFunction::ramp(-1.0, 1.0, 2.0).unwrap();
        assert_eq!(r.eval(0.5), 1.0);
        assert_eq!(r.total_variation(), 4.0);
        assert!(r.jump_points().is_empty());
        assert!(BvFunction::new(vec![1.0, 0.0], vec![0.0, 0.0], vec![AffinePiece { value: 0.0, slope: 0.0 }; 3]).is_err());
    }

    #[test]
    fn jordan_examples() {
        let f = BvFunction::step(0.0, 0.0, 1.0, 1.0);
        let j = f.jordan_decompose();
        assert_eq!(j.a, 0.0);
        assert_eq!(j.f1, f);
        assert_eq!(j.f2.sup_norm(), 0.0);
        let g = BvFunction::step(0.0, 0.0, -1.0, -1.0);
        let j = g.jordan_decompose();
        assert_eq!(j.f1.sup_norm(), 0.0);
        assert_eq!(j.f2, BvFunction::step(0.0, 0.0, 1.0, 1.0));

        let s = staircase();
        let j = s.jordan_decompose();
        assert_eq!(j.f1.eval(0.5), 1.0);
        assert_eq!(j.f1.eval(1.5), 1.0);
        assert_eq!(j.f1.eval(2.5), 2.0);
        assert_eq!(j.f2.eval(1.5), 2.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let r = BvFunction::new(
            vec![-1.0, 0.5, 2.0],
            vec![0.3, -0.7, 2.0],
            vec![
                AffinePiece { value: 1.0, slope: 0.0 },
                AffinePiece { value: 0.0, slope: -2.0 },
                AffinePiece { value: 0.4, slope: 1.5 },
                AffinePiece { value: -0.2, slope: 0.0 },
            ],
        )
        .unwrap();
        for f in [s, r] {
            let j = f.jordan_decompose();
            let tv = f.total_variation();
            for _ in 0..1000 {
                let x = rng.gen_range(-3.0..4.0);
                assert!((j.a + j.f1.eval(x) - j.f2.eval(x) - f.eval(x)).abs() < 1e-12);
                assert!(j.f1.eval(x) >= -1e-15 && j.f1.eval(x) <= tv + 1e-12);
                assert!(j.f1.eval(x + 0.01) >= j.f1.eval(x) - 1e-12);
                assert!(j.f2.eval(x + 0.01) >= j.f2.eval(x) - 1e-12);
            }
            for &b in f.breakpoints() {
                assert!((j.a + j.f1.eval(b) - j.f2.eval(b) - f.eval(b)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn envelope_examples() {
        let f = BvFunction::positive_indicator();
        for m in [1, 3, 8] {
            let (lo, hi) = f.envelopes(m).unwrap();
            assert_eq!(lo.eval(0.0), 0.0);
            assert_eq!(hi.eval(0.0), 1.0);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let f = staircase();
        let (lo, hi) = f.envelopes(4).unwrap();
        for _ in 0..10_000 {
            let x = rng.gen_range(-3.0..5.0);
            assert!(lo.eval(x) <= f.eval(x) && f.eval(x) <= hi.eval(x));
            assert!(lo.eval(x) >= -f.sup_norm() && hi.eval(x) <= f.sup_norm());
        }
        // continuous f: gap controlled by the variation over a window of width 4/m
        let r = BvFunction::ramp(-1.0, 1.0, 1.0).unwrap();
        let (lo, hi) = r.envelopes(16).unwrap();
        for k in 0..200 {
            let x = -2.0 + k as f64 * 0.02;
            assert!(hi.eval(x) - lo.eval(x) <= 4.0 / 16.0 + 1e-12);
        }
    }

    #[test]
    fn potential_examples() {
        let lam = [0.25; 4];
        assert_eq!(potential_q(&BvFunction::constant(0.0), &lam, &[1.0, 2.0, 3.0, 4.0]).unwrap(), 0.0);
        assert_eq!(potential_q(&BvFunction::constant(2.0), &lam, &[1.0, -2.0, 3.0, 4.0]).unwrap(), 2.0);
        let q = potential_q(&BvFunction::positive_indicator(), &lam, &[1.0, -2.0, 3.0, -4.0]).unwrap();
        assert_eq!(q, 0.5);
        assert!(potential_q(&BvFunction::constant(1.0), &[-1.0], &[0.0]).is_err());
    }

    #[test]
    fn boltzmann_closed_form() {
        let f = BvFunction::positive_indicator();
        let z = gaussian_boltzmann_factor(&f, 0.7, 2.0);
        assert!((z - 0.5 * (1.0 + (-0.7f64).exp())).abs() < 1e-15);
        // affine piece against a brute-force midpoint oracle
        let r = BvFunction::ramp(-1.0, 1.5, 1.0).unwrap();
        let var: f64 = 0.3;
        let n = 400_000;
        let (a, b) = (-8.0, 8.0);
        let h = (b - a) / n as f64;
        let mut s = 0.0;
        for i in 0..n {
            let x = a + (i as f64 + 0.5) * h;
            s += (-0.9 * r.eval(x)).exp() * (-x * x / (2.0 * var)).exp();
        }
        s *= h / (2.0 * std::f64::consts::PI * var).sqrt();
        assert!((gaussian_boltzmann_factor(&r, 0.9, var) - s).abs() < 1e-9);
    }

    #[test]
    fn partition_examples() {
        let var = [0.1, 0.2, 0.3];
        let lam = [1.0, 0.5, 0.25];
        let z = partition_function(&BvFunction::constant(0.0), &lam, &var, 3, 100, 1).unwrap();
        assert_eq!(z.mean, 1.0);
        let z = partition_function(&BvFunction::constant(2.0), &lam, &var, 2, 100, 1).unwrap();
        assert!((z.mean - (-2.0f64 * 1.75).exp()).abs() < 1e-15);
        assert!(partition_function(&BvFunction::constant(0.0), &lam, &var, 3, 0, 1).is_err());
    }
}
