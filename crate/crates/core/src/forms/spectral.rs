//! Small dense generalized eigenproblems and Gauss-Laguerre nodes.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::sparse::CsrMatrix;
use crate::error::{Error, Result};

fn dense(a: &CsrMatrix) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(a.n, a.n);
    for i in 0..a.n {
        for (j, v) in a.row(i) {
            m[(i, j)] = v;
        }
    }
    m
}

/// `S v = lambda M v` with `M`-orthonormal eigenvectors, eigenvalues ascending.
#[derive(Clone, Debug)]
pub struct GeneralizedEigen {
    pub values: Vec<f64>,
    /// Column `k` is the `k`-th eigenvector.
    pub vectors: DMatrix<f64>,
    mass: DMatrix<f64>,
}

impl GeneralizedEigen {
    pub fn new(s: &CsrMatrix, m: &CsrMatrix) -> Result<Self> {
        let md = dense(m);
        let chol = md
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Solver("mass matrix is not positive definite".into()))?;
        let l = chol.l();
        let linv = l
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Solver("singular mass factor".into()))?;
        let c = &linv * dense(s) * linv.transpose();
        let c = (&c + c.transpose()) * 0.5;
        let eig = SymmetricEigen::new(c);
        let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
        let w = linv.transpose() * &eig.eigenvectors;
        let vectors = DMatrix::from_fn(w.nrows(), w.ncols(), |i, j| w[(i, order[j])]);
        Ok(Self { values, vectors, mass: md })
    }

    /// `exp(-t S_M) f`, i.e. the exact semigroup of the discrete form.
    pub fn semigroup(&self, t: f64, f: &[f64]) -> Vec<f64> {
        self.spectral_apply(f, |l| (-t * l).exp())
    }

    /// `(alpha + S_M)^{-1} f`.
    pub fn resolvent(&self, alpha: f64, f: &[f64]) -> Vec<f64> {
        self.spectral_apply(f, |l| 1.0 / (alpha + l))
    }

    fn spectral_apply(&self, f: &[f64], h: impl Fn(f64) -> f64) -> Vec<f64> {
        let fv = DVector::from_column_slice(f);
        let coeff = self.vectors.transpose() * (&self.mass * fv);
        let scaled = DVector::from_fn(coeff.len(), |k, _| coeff[k] * h(self.values[k]));
        (&self.vectors * scaled).iter().copied().collect()
    }
}

/// Gauss-Laguerre nodes and weights for `int_0^inf e^{-s} h(s) ds` (Golub-Welsch).
pub fn gauss_laguerre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut j = DMatrix::zeros(n, n);
    for k in 0..n {
        j[(k, k)] = (2 * k + 1) as f64;
        if k + 1 < n {
            j[(k, k + 1)] = (k + 1) as f64;
            j[(k + 1, k)] = (k + 1) as f64;
        }
    }
    let eig = SymmetricEigen::new(j);
    let mut pairs: Vec<(f64, f64)> =
        (0..n).map(|k| (eig.eigenvalues[k], eig.eigenvectors[(0, k)].powi(2))).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}
