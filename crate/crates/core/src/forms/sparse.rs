//! Compressed sparse rows, a profile Cholesky factorization and Jacobi-preconditioned CG.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CsrMatrix {
    pub n: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub data: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from accumulated entries; the map order fixes the layout.
    pub fn from_map(n: usize, entries: &BTreeMap<(usize, usize), f64>) -> Self {
        let mut indptr = vec![0; n + 1];
        let mut indices = Vec::with_capacity(entries.len());
        let mut data = Vec::with_capacity(entries.len());
        for (&(i, j), &v) in entries {
            indptr[i + 1] += 1;
            indices.push(j);
            data.push(v);
        }
        for i in 0..n {
            indptr[i + 1] += indptr[i];
        }
        Self { n, indptr, indices, data }
    }

    pub fn from_triplets(n: usize, triplets: impl IntoIterator<Item = (usize, usize, f64)>) -> Self {
        let mut map = BTreeMap::new();
        for (i, j, v) in triplets {
            *map.entry((i, j)).or_insert(0.0) += v;
        }
        Self::from_map(n, &map)
    }

    pub fn diagonal(values: &[f64]) -> Self {
        Self::from_triplets(values.len(), values.iter().enumerate().map(|(i, &v)| (i, i, v)))
    }

    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (a, b) = (self.indptr[i], self.indptr[i + 1]);
        self.indices[a..b].iter().copied().zip(self.data[a..b].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (a, b) = (self.indptr[i], self.indptr[i + 1]);
        match self.indices[a..b].binary_search(&j) {
            Ok(k) => self.data[a + k],
            Err(_) => 0.0,
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).map(|(j, v)| v * x[j]).sum()).collect()
    }

    /// `x^T A y`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        (0..self.n).map(|i| x[i] * self.row(i).map(|(j, v)| v * y[j]).sum::<f64>()).sum()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).map(|(_, v)| v).sum()).collect()
    }

    /// `a A + b B` over the union pattern.
    pub fn linear_combination(a: f64, x: &CsrMatrix, b: f64, y: &CsrMatrix) -> Result<Self> {
        if x.n != y.n {
            return Err(Error::DimensionMismatch { expected: x.n, got: y.n });
        }
        let mut map = BTreeMap::new();
        for i in 0..x.n {
            for (j, v) in x.row(i) {
                *map.entry((i, j)).or_insert(0.0) += a * v;
            }
            for (j, v) in y.row(i) {
                *map.entry((i, j)).or_insert(0.0) += b * v;
            }
        }
        Ok(Self::from_map(x.n, &map))
    }

    pub fn max_asymmetry(&self) -> f64 {
        let mut m = 0.0f64;
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                m = m.max((v - self.get(j, i)).abs());
            }
        }
        m
    }

    pub fn max_offdiagonal(&self) -> f64 {
        let mut m = f64::NEG_INFINITY;
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                if i != j {
                    m = m.max(v);
                }
            }
        }
        m
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.n]; self.n];
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                out[i][j] = v;
            }
        }
        out
    }

    /// Matrix Market coordinate format; symmetric matrices store the lower triangle.
    pub fn to_matrix_market(&self, comment: &str) -> String {
        let symmetric = self.max_asymmetry() == 0.0;
        let mut s = String::new();
        let kind = if symmetric { "symmetric" } else { "general" };
        let _ = writeln!(s, "%%MatrixMarket matrix coordinate real {kind}");
        for line in comment.lines() {
            let _ = writeln!(s, "% {line}");
        }
        let entries: Vec<(usize, usize, f64)> = (0..self.n)
            .flat_map(|i| self.row(i).map(move |(j, v)| (i, j, v)))
            .filter(|&(i, j, _)| !symmetric || j <= i)
            .collect();
        let _ = writeln!(s, "{} {} {}", self.n, self.n, entries.len());
        for (i, j, v) in entries {
            let _ = writeln!(s, "{} {} {:.17e}", i + 1, j + 1, v);
        }
        s
    }
}

/// Cholesky factor stored by rows over the envelope `first[i]..=i`.
#[derive(Clone, Debug)]
pub struct SkylineCholesky {
    n: usize,
    first: Vec<usize>,
    start: Vec<usize>,
    l: Vec<f64>,
}

impl SkylineCholesky {
    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        let n = a.n;
        let first: Vec<usize> = (0..n)
            .map(|i| a.row(i).map(|(j, _)| j).filter(|&j| j <= i).min().unwrap_or(i))
            .collect();
        let mut start = vec![0; n + 1];
        for i in 0..n {
            start[i + 1] = start[i] + (i - first[i] + 1);
        }
        let mut l = vec![0.0; start[n]];
        for i in 0..n {
            for (j, v) in a.row(i) {
                if j <= i {
                    l[start[i] + j - first[i]] = v;
                }
            }
        }
        let (mut dmin, mut dmax) = (f64::INFINITY, 0.0f64);
        for i in 0..n {
            let fi = first[i];
            for j in fi..=i {
                let fj = first[j];
                let k0 = fi.max(fj);
                let mut s = l[start[i] + j - fi];
                for k in k0..j {
                    s -= l[start[i] + k - fi] * l[start[j] + k - fj];
                }
                if j < i {
                    l[start[i] + j - fi] = s / l[start[j] + j - fj];
                } else {
                    if !(s > 0.0) {
                        return Err(Error::Solver(format!(
                            "matrix is not positive definite: pivot {i} is {s:e} (earlier pivots in [{dmin:e}, {dmax:e}])"
                        )));
                    }
                    let p = s.sqrt();
                    dmin = dmin.min(s);
                    dmax = dmax.max(s);
                    l[start[i] + i - fi] = p;
                }
            }
        }
        Ok(Self { n, first, start, l })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut y = b.to_vec();
        for i in 0..n {
            let fi = self.first[i];
            let row = &self.l[self.start[i]..self.start[i + 1]];
            let mut s = y[i];
            for k in fi..i {
                s -= row[k - fi] * y[k];
            }
            y[i] = s / row[i - fi];
        }
        for i in (0..n).rev() {
            let fi = self.first[i];
            let row = &self.l[self.start[i]..self.start[i + 1]];
            y[i] /= row[i - fi];
            let yi = y[i];
            for k in fi..i {
                y[k] -= row[k - fi] * yi;
            }
        }
        y
    }

    /// Ratio of the largest to the smallest squared pivot, a cheap conditioning proxy.
    pub fn pivot_ratio(&self) -> f64 {
        let d: Vec<f64> = (0..self.n).map(|i| self.l[self.start[i] + i - self.first[i]].powi(2)).collect();
        let mx = d.iter().cloned().fold(0.0, f64::max);
        let mn = d.iter().cloned().fold(f64::INFINITY, f64::min);
        mx / mn
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CgReport {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Jacobi-preconditioned conjugate gradients.
pub fn conjugate_gradient(a: &CsrMatrix, b: &[f64], tol: f64, max_iter: usize) -> Result<(Vec<f64>, CgReport)> {
    let n = a.n;
    let diag: Vec<f64> = (0..n).map(|i| a.get(i, i)).collect();
    if let Some(i) = diag.iter().position(|d| !(*d > 0.0)) {
        return Err(Error::Solver(format!("nonpositive diagonal {:e} at row {i}", diag[i])));
    }
    let bnorm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok((x, CgReport { iterations: 0, relative_residual: 0.0 }));
    }
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&diag).map(|(r, d)| r / d).collect();
    let mut p = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    for it in 0..max_iter {
        let ap = a.mul_vec(&p);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if !(pap > 0.0) {
            return Err(Error::Solver(format!("CG breakdown: p^T A p = {pap:e} at iteration {it}")));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rn = r.iter().map(|v| v * v).sum::<f64>().sqrt() / bnorm;
        if rn <= tol {
            return Ok((x, CgReport { iterations: it + 1, relative_residual: rn }));
        }
        for i in 0..n {
            z[i] = r[i] / diag[i];
        }
        let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::Solver(format!("CG did not reach {tol:e} in {max_iter} iterations")))
}
