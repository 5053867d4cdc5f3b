//! Small dense symmetric helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Eigendecomposition of a symmetric matrix with eigenvalues sorted ascending.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: DVector<f64>,
    /// Columns are unit eigenvectors, ordered like `values`.
    pub vectors: DMatrix<f64>,
}

impl SymEigen {
    pub fn new(m: &DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::structural(format!(
                "eigendecomposition of a non-square {}x{} matrix",
                m.nrows(),
                m.ncols()
            )));
        }
        let n = m.nrows();
        if n == 0 {
            return Ok(SymEigen {
                values: DVector::zeros(0),
                vectors: DMatrix::zeros(0, 0),
            });
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::numerical("matrix has non-finite entries"));
        }
        let eig = SymmetricEigen::try_new(symmetrize(m), f64::EPSILON, 0)
            .ok_or_else(|| Error::numerical("symmetric eigensolver did not converge"))?;

        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
        let mut vectors = DMatrix::zeros(n, n);
        for (dst, &src) in order.iter().enumerate() {
            vectors.set_column(dst, &eig.eigenvectors.column(src));
        }
        Ok(SymEigen { values, vectors })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Top eigenvector, with the sign fixed so its first non-negligible
    /// coordinate is positive.
    pub fn top_vector(&self) -> DVector<f64> {
        let mut v = self.vectors.column(self.dim() - 1).into_owned();
        canonical_sign(&mut v);
        v
    }

    /// Rebuild `V f(Λ) Vᵀ`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let mut scaled = self.vectors.clone();
        for (j, &lam) in self.values.iter().enumerate() {
            let s = f(lam);
            scaled.column_mut(j).scale_mut(s);
        }
        let out = &scaled * self.vectors.transpose();
        symmetrize(&out)
    }
}

/// `(M + Mᵀ)/2`.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Flip `v` so its first coordinate with magnitude above `1e-12·‖v‖∞` is positive.
pub fn canonical_sign(v: &mut DVector<f64>) {
    let scale = v.amax();
    if scale == 0.0 {
        return;
    }
    if let Some(first) = v.iter().find(|x| x.abs() > 1e-12 * scale) {
        if *first < 0.0 {
            v.neg_mut();
        }
    }
}

/// Cosine similarity `rᵀs / (‖r‖‖s‖)`; zero when either vector vanishes.
pub fn cosine(r: &DVector<f64>, s: &DVector<f64>) -> f64 {
    let denom = r.norm() * s.norm();
    if denom == 0.0 {
        0.0
    } else {
        r.dot(s) / denom
    }
}

pub fn sup_norm(v: &DVector<f64>) -> f64 {
    v.amax()
}
