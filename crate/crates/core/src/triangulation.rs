//! Coxeter-Freudenthal-Kuhn triangulation of the r-lattice.
//!
//! Every lattice cube `alpha + [0,r)^d` splits into `d!` semi-open cells, one per
//! permutation of the axes. A cell is keyed by its anchor (an integer multi-index,
//! coordinates are `anchor * r`) and the permutation giving the order in which the
//! monotone edge path from `anchor` to `anchor + (1,...,1)` visits the axes.
//!
//! Permutations are stored 0-based: `axes()[k]` is the axis walked at step `k+1`.

use serde::{Deserialize, Serialize};
use std::cmp::Ordering;

use crate::error::{Error, Result};

/// Integer lattice multi-index; the physical point is `index * r`.
pub type LatticePoint = Vec<i64>;

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Permutation(Vec<usize>);

impl Permutation {
    /// Build from 0-based axes, validating bijectivity.
    pub fn new(axes: Vec<usize>) -> Result<Self> {
        let d = axes.len();
        if d == 0 {
            return Err(Error::InvalidPermutation(axes));
        }
        let mut seen = vec![false; d];
        for &a in &axes {
            if a >= d || seen[a] {
                return Err(Error::InvalidPermutation(axes));
            }
            seen[a] = true;
        }
        Ok(Self(axes))
    }

    /// Build from the 1-based notation `(σ(1), ..., σ(d))`.
    pub fn from_one_based(sigma: &[usize]) -> Result<Self> {
        if sigma.contains(&0) {
            return Err(Error::InvalidPermutation(sigma.to_vec()));
        }
        Self::new(sigma.iter().map(|&s| s - 1).collect())
    }

    pub fn to_one_based(&self) -> Vec<usize> {
        self.0.iter().map(|&a| a + 1).collect()
    }

    pub fn identity(d: usize) -> Self {
        Self((0..d).collect())
    }

    /// `(d, d-1, ..., 1)`: the cell that owns the anchor itself.
    pub fn reversed(d: usize) -> Self {
        Self((0..d).rev().collect())
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn axes(&self) -> &[usize] {
        &self.0
    }

    /// Axis walked at 0-based step `k`.
    pub fn axis(&self, k: usize) -> usize {
        self.0[k]
    }

    /// Step at which `axis` is walked (the inverse permutation).
    pub fn step_of(&self, axis: usize) -> usize {
        self.0
            .iter()
            .position(|&a| a == axis)
            .expect("axis within permutation range")
    }

    /// All `d!` permutations in lexicographic order.
    pub fn all(d: usize) -> Vec<Permutation> {
        use itertools::Itertools;
        (0..d).permutations(d).map(Permutation).collect()
    }
}

/// Axis-aligned box with corners on the r-lattice, stored in index units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub d: usize,
    pub r: f64,
    pub lo: Vec<i64>,
    pub hi: Vec<i64>,
}

impl GridSpec {
    pub fn new(r: f64, lo: Vec<i64>, hi: Vec<i64>) -> Result<Self> {
        if !(r > 0.0) || !r.is_finite() {
            return Err(Error::InvalidGrid(format!("mesh size must be positive, got {r}")));
        }
        if lo.is_empty() || lo.len() != hi.len() {
            return Err(Error::InvalidGrid("box corners must share a dimension >= 1".into()));
        }
        if lo.iter().zip(&hi).any(|(a, b)| a >= b) {
            return Err(Error::InvalidGrid(format!("empty box {lo:?}..{hi:?}")));
        }
        Ok(Self { d: lo.len(), r, lo, hi })
    }

    /// Box given in physical coordinates; corners must be multiples of `r`.
    pub fn from_box(r: f64, lo: &[f64], hi: &[f64]) -> Result<Self> {
        let to_index = |v: f64| -> Result<i64> {
            let q = v / r;
            let k = q.round();
            if (q - k).abs() > 1e-9 * q.abs().max(1.0) {
                return Err(Error::InvalidGrid(format!("corner {v} is not a multiple of r={r}")));
            }
            Ok(k as i64)
        };
        if !(r > 0.0) {
            return Err(Error::InvalidGrid(format!("mesh size must be positive, got {r}")));
        }
        let lo = lo.iter().map(|&v| to_index(v)).collect::<Result<Vec<_>>>()?;
        let hi = hi.iter().map(|&v| to_index(v)).collect::<Result<Vec<_>>>()?;
        Self::new(r, lo, hi)
    }

    /// Smallest r-aligned box containing `[lo, hi]`.
    pub fn covering(r: f64, lo: &[f64], hi: &[f64]) -> Result<Self> {
        if !(r > 0.0) {
            return Err(Error::InvalidGrid(format!("mesh size must be positive, got {r}")));
        }
        let lo = lo.iter().map(|&v| (v / r).floor() as i64).collect();
        let hi = hi.iter().map(|&v| (v / r).ceil() as i64).collect();
        Self::new(r, lo, hi)
    }

    /// Symmetric cube `[-n r, n r]^d`.
    pub fn centered(d: usize, r: f64, n: i64) -> Result<Self> {
        Self::new(r, vec![-n; d], vec![n; d])
    }

    pub fn box_lo(&self) -> Vec<f64> {
        self.lo.iter().map(|&k| k as f64 * self.r).collect()
    }

    pub fn box_hi(&self) -> Vec<f64> {
        self.hi.iter().map(|&k| k as f64 * self.r).collect()
    }

    pub fn volume(&self) -> f64 {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(a, b)| (b - a) as f64 * self.r)
            .product()
    }

    pub fn contains_point(&self, x: &[f64]) -> bool {
        x.iter().enumerate().all(|(i, &v)| {
            v >= self.lo[i] as f64 * self.r && v <= self.hi[i] as f64 * self.r
        })
    }

    pub fn contains_node(&self, alpha: &[i64]) -> bool {
        alpha
            .iter()
            .enumerate()
            .all(|(i, &a)| a >= self.lo[i] && a <= self.hi[i])
    }

    /// Lattice nodes of the closed box, last axis fastest.
    pub fn nodes(&self) -> Vec<LatticePoint> {
        let hi_incl: Vec<i64> = self.hi.clone();
        multi_range(&self.lo, &hi_incl)
    }

    /// Cube anchors `lo <= a < hi`.
    pub fn cube_anchors(&self) -> Vec<LatticePoint> {
        let hi: Vec<i64> = self.hi.iter().map(|h| h - 1).collect();
        multi_range(&self.lo, &hi)
    }

    /// All cells of the box, ordered by anchor then permutation.
    pub fn cells(&self) -> Vec<PathSimplex> {
        let perms = Permutation::all(self.d);
        let mut out = Vec::with_capacity(self.cube_anchors().len() * perms.len());
        for a in self.cube_anchors() {
            for p in &perms {
                out.push(PathSimplex::new(a.clone(), p.clone(), self.r));
            }
        }
        out
    }

    pub fn locate(&self, x: &[f64]) -> PathSimplex {
        locate(x, self.r)
    }

    pub fn simplex_volume(&self) -> f64 {
        simplex_volume(self.d, self.r)
    }

    /// Physical coordinates of a lattice node.
    pub fn coords(&self, alpha: &[i64]) -> Vec<f64> {
        alpha.iter().map(|&a| a as f64 * self.r).collect()
    }
}

/// Inclusive odometer over `lo..=hi`, last axis fastest.
pub(crate) fn multi_range(lo: &[i64], hi: &[i64]) -> Vec<LatticePoint> {
    let d = lo.len();
    if lo.iter().zip(hi).any(|(a, b)| a > b) {
        return Vec::new();
    }
    let mut out = Vec::new();
    let mut cur = lo.to_vec();
    loop {
        out.push(cur.clone());
        let mut k = d;
        loop {
            if k == 0 {
                return out;
            }
            k -= 1;
            if cur[k] < hi[k] {
                cur[k] += 1;
                for j in k + 1..d {
                    cur[j] = lo[j];
                }
                break;
            }
        }
    }
}

/// A cell `D_T` of the triangulation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathSimplex {
    pub anchor: LatticePoint,
    pub perm: Permutation,
    pub r: f64,
}

impl Eq for PathSimplex {}

impl std::hash::Hash for PathSimplex {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.anchor.hash(state);
        self.perm.hash(state);
        self.r.to_bits().hash(state);
    }
}

impl PartialOrd for PathSimplex {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for PathSimplex {
    fn cmp(&self, other: &Self) -> Ordering {
        self.anchor
            .cmp(&other.anchor)
            .then_with(|| self.perm.cmp(&other.perm))
            .then_with(|| self.r.total_cmp(&other.r))
    }
}

impl PathSimplex {
    pub fn new(anchor: LatticePoint, perm: Permutation, r: f64) -> Self {
        debug_assert_eq!(anchor.len(), perm.dim());
        Self { anchor, perm, r }
    }

    pub fn dim(&self) -> usize {
        self.anchor.len()
    }

    /// Lattice index of `T(i)`.
    pub fn vertex(&self, i: usize) -> LatticePoint {
        let mut v = self.anchor.clone();
        for k in 0..i {
            v[self.perm.axis(k)] += 1;
        }
        v
    }

    pub fn vertices(&self) -> Vec<LatticePoint> {
        let d = self.dim();
        let mut out = Vec::with_capacity(d + 1);
        let mut v = self.anchor.clone();
        out.push(v.clone());
        for k in 0..d {
            v[self.perm.axis(k)] += 1;
            out.push(v.clone());
        }
        out
    }

    pub fn vertex_coords(&self, i: usize) -> Vec<f64> {
        self.vertex(i).iter().map(|&k| k as f64 * self.r).collect()
    }

    /// Vertex position of `alpha` within the path, if it is a vertex.
    pub fn vertex_position(&self, alpha: &[i64]) -> Option<usize> {
        let d = self.dim();
        let mut v = self.anchor.clone();
        if v == alpha {
            return Some(0);
        }
        for k in 0..d {
            v[self.perm.axis(k)] += 1;
            if v == alpha {
                return Some(k + 1);
            }
        }
        None
    }

    /// Cell-local coordinates `x/r - anchor`.
    pub fn local_coords(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.anchor)
            .map(|(&xi, &a)| xi / self.r - a as f64)
            .collect()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        membership(x, self)
    }

    pub fn centroid(&self) -> Vec<f64> {
        let d = self.dim();
        let mut c = vec![0.0; d];
        for v in self.vertices() {
            for (ci, vi) in c.iter_mut().zip(v) {
                *ci += vi as f64;
            }
        }
        c.iter().map(|s| s / (d + 1) as f64 * self.r).collect()
    }

    pub fn volume(&self) -> f64 {
        simplex_volume(self.dim(), self.r)
    }

    /// The `2^d` half-scale cells whose union is this cell.
    pub fn children(&self) -> Vec<PathSimplex> {
        let d = self.dim();
        let h = self.r / 2.0;
        let perms = Permutation::all(d);
        let base: Vec<i64> = self.anchor.iter().map(|a| 2 * a).collect();
        let corners = multi_range(&vec![0; d], &vec![1; d]);
        let mut out = Vec::with_capacity(1 << d);
        for b in corners {
            let anchor: Vec<i64> = base.iter().zip(&b).map(|(a, o)| a + o).collect();
            for p in &perms {
                let child = PathSimplex::new(anchor.clone(), p.clone(), h);
                if self.contains(&child.centroid()) {
                    out.push(child);
                }
            }
        }
        out
    }
}

/// Builds the cell from a permutation and an anchor.
pub fn perm_to_path(perm: &Permutation, anchor: &[i64], r: f64) -> Result<PathSimplex> {
    if perm.dim() != anchor.len() {
        return Err(Error::DimensionMismatch { expected: perm.dim(), got: anchor.len() });
    }
    if !(r > 0.0) {
        return Err(Error::InvalidGrid(format!("mesh size must be positive, got {r}")));
    }
    Ok(PathSimplex::new(anchor.to_vec(), perm.clone(), r))
}

/// Reads the permutation back from consecutive vertex differences.
pub fn perm_from_path(vertices: &[LatticePoint]) -> Result<Permutation> {
    if vertices.len() < 2 {
        return Err(Error::InvalidArgument("a path needs at least two vertices".into()));
    }
    let d = vertices[0].len();
    let mut axes = Vec::with_capacity(d);
    for w in vertices.windows(2) {
        let diff: Vec<i64> = w[1].iter().zip(&w[0]).map(|(a, b)| a - b).collect();
        let hits: Vec<usize> = (0..d).filter(|&i| diff[i] != 0).collect();
        if hits.len() != 1 || diff[hits[0]] != 1 {
            return Err(Error::InvalidArgument(format!("step {diff:?} is not a unit axis step")));
        }
        axes.push(hits[0]);
    }
    Permutation::new(axes)
}

/// Cell of the triangulation at scale `r` containing `x`.
///
/// The anchor is the floor of `x/r` as rounded to the nearest double; the fractional
/// part `x/r - floor(x/r)` is then exact, so no tolerance enters the decision.
pub fn locate(x: &[f64], r: f64) -> PathSimplex {
    let d = x.len();
    let mut anchor = Vec::with_capacity(d);
    let mut frac = Vec::with_capacity(d);
    for &xi in x {
        let y = xi / r;
        let k = y.floor();
        anchor.push(k as i64);
        frac.push(y - k);
    }
    let mut idx: Vec<usize> = (0..d).collect();
    // descending lexicographic on (fraction, index)
    idx.sort_by(|&a, &b| frac[b].total_cmp(&frac[a]).then(b.cmp(&a)));
    PathSimplex::new(anchor, Permutation(idx), r)
}

/// Semi-open cell membership via the inequality chain.
pub fn membership(x: &[f64], t: &PathSimplex) -> bool {
    let d = t.dim();
    if x.len() != d {
        return false;
    }
    let xl = t.local_coords(x);
    let p = t.perm.axes();
    if !(xl[p[d - 1]] >= 0.0) || !(xl[p[0]] < 1.0) {
        return false;
    }
    for j in 1..d {
        let (lower, upper) = (xl[p[j]], xl[p[j - 1]]);
        let ok = if p[j - 1] < p[j] { lower < upper } else { lower <= upper };
        if !ok {
            return false;
        }
    }
    true
}

pub fn simplex_volume(d: usize, r: f64) -> f64 {
    let fact: f64 = (1..=d).map(|k| k as f64).product();
    r.powi(d as i32) / fact
}

/// All `(T, i)` with `T(i) = alpha`; there are `(d+1)!` of them.
pub fn incident_vertices(alpha: &[i64], r: f64) -> Vec<(PathSimplex, usize)> {
    let d = alpha.len();
    let mut out = Vec::with_capacity((1..=d + 1).product());
    for p in Permutation::all(d) {
        for i in 0..=d {
            let mut anchor = alpha.to_vec();
            for k in 0..i {
                anchor[p.axis(k)] -= 1;
            }
            out.push((PathSimplex::new(anchor, p.clone(), r), i));
        }
    }
    out
}

/// Sorted, duplicate-free collection of cells sharing one scale.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimplexKeySet {
    pub r: f64,
    keys: Vec<PathSimplex>,
}

impl SimplexKeySet {
    pub fn new(r: f64, mut keys: Vec<PathSimplex>) -> Result<Self> {
        if keys.iter().any(|k| k.r != r) {
            return Err(Error::InvalidArgument("cells of mixed scale".into()));
        }
        keys.sort();
        keys.dedup();
        Ok(Self { r, keys })
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &PathSimplex> {
        self.keys.iter()
    }

    pub fn contains(&self, t: &PathSimplex) -> bool {
        self.keys.binary_search(t).is_ok()
    }
}

/// Cells whose path leaves `alpha` along `axis` (0-based): `T(step_of(axis)) = alpha`.
pub fn simplices_leaving(alpha: &[i64], axis: usize, r: f64) -> Result<SimplexKeySet> {
    let d = alpha.len();
    if axis >= d {
        return Err(Error::IndexOutOfRange { index: axis, d });
    }
    let mut keys = Vec::new();
    for p in Permutation::all(d) {
        let s = p.step_of(axis);
        let mut anchor = alpha.to_vec();
        for k in 0..s {
            anchor[p.axis(k)] -= 1;
        }
        keys.push(PathSimplex::new(anchor, p, r));
    }
    SimplexKeySet::new(r, keys)
}
