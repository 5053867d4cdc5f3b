//! Global maximization of a convex quadratic over a Euclidean ball.
//!
//! For `f(z) = ½zᵀMz + qᵀz` with `M ⪰ 0` the maximizer lies on the sphere
//! `‖z‖² = r²` and satisfies `(2λI − M)z = q` with `2λ ≥ λ_max(M)`. In the
//! eigenbasis of `M` this is the secular equation
//! `Σ q̂_i² / (2λ − μ_i)² = r²`, solved here by safeguarded Newton on
//! `1/‖z(λ)‖ − 1/r`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::SymEigen;

/// Eigenvalues below `−PSD_TOL·max(1, λ_max)` reject the matrix.
const PSD_TOL: f64 = 1e-10;
/// `q` counts as orthogonal to the top eigenspace below this relative weight.
const HARD_CASE_TOL: f64 = 1e-12;
const SECULAR_TOL: f64 = 1e-12;
const MAX_ITERATIONS: usize = 500;

#[derive(Debug, Clone, PartialEq)]
pub struct SphereMaxResult {
    pub z: DVector<f64>,
    /// Multiplier of the constraint `‖z‖² ≤ r²`.
    pub lambda: f64,
    pub hard_case: bool,
    pub iterations: usize,
}

/// A fixed `M`, eigendecomposed once and reused for many `(q, r²)`.
#[derive(Debug, Clone)]
pub struct SphereMaximizer {
    eig: SymEigen,
    top_tol: f64,
}

impl SphereMaximizer {
    pub fn new(m: &DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::structural("sphere_max needs a square matrix"));
        }
        let scale = m.amax().max(1.0);
        let asym = (m - m.transpose()).amax();
        if asym > 1e-9 * scale {
            return Err(Error::precondition(format!(
                "sphere_max matrix is not symmetric (asymmetry {asym:e})"
            )));
        }
        let eig = SymEigen::new(m)?;
        if eig.dim() > 0 {
            let lmax = eig.max();
            let lmin = eig.min();
            if lmin < -PSD_TOL * lmax.abs().max(1.0) {
                return Err(Error::precondition(format!(
                    "sphere_max matrix is not positive semidefinite (min eigenvalue {lmin:e})"
                )));
            }
        }
        let top_tol = 1e-10 * eig.max().abs().max(1.0);
        Ok(SphereMaximizer { eig, top_tol })
    }

    pub fn dim(&self) -> usize {
        self.eig.dim()
    }

    /// `λ_max(M)`, clamped at zero.
    pub fn lambda_max(&self) -> f64 {
        if self.dim() == 0 {
            0.0
        } else {
            self.eig.max().max(0.0)
        }
    }

    fn is_top(&self, i: usize) -> bool {
        self.eig.values[i] >= self.lambda_max() - self.top_tol
    }

    pub fn objective(m: &DMatrix<f64>, q: &DVector<f64>, z: &DVector<f64>) -> f64 {
        0.5 * z.dot(&(m * z)) + q.dot(z)
    }

    pub fn solve(&self, q: &DVector<f64>, r2: f64) -> Result<SphereMaxResult> {
        let d = self.dim();
        if q.len() != d {
            return Err(Error::structural(format!(
                "q has length {}, matrix is {d}x{d}",
                q.len()
            )));
        }
        if !(r2.is_finite() && r2 >= 0.0) {
            return Err(Error::precondition(format!(
                "squared radius must be finite and >= 0, got {r2}"
            )));
        }
        if q.iter().any(|v| !v.is_finite()) {
            return Err(Error::numerical("q has non-finite entries"));
        }
        let lmax = self.lambda_max();
        if d == 0 || r2 == 0.0 {
            return Ok(SphereMaxResult {
                z: DVector::zeros(d),
                lambda: 0.5 * lmax,
                hard_case: false,
                iterations: 0,
            });
        }

        let vals = &self.eig.values;
        let qt = self.eig.vectors.tr_mul(q);
        let qnorm = q.norm();
        let top_weight: f64 = (0..d)
            .filter(|&i| self.is_top(i))
            .map(|i| qt[i] * qt[i])
            .sum::<f64>()
            .sqrt();

        if top_weight <= HARD_CASE_TOL * qnorm {
            // Candidate hard case: the secular function stays finite at 2λ = λ_max.
            let mut zt = DVector::zeros(d);
            for i in (0..d).filter(|&i| !self.is_top(i)) {
                zt[i] = qt[i] / (lmax - vals[i]);
            }
            let rest = zt.norm_squared();
            if rest <= r2 {
                let fill = (r2 - rest).sqrt();
                // Canonical sign unless q has a (negligible) top component to follow.
                let mut v = self.eig.top_vector();
                if q.dot(&v) < 0.0 {
                    v.neg_mut();
                }
                let z = &self.eig.vectors * zt + v * fill;
                return Ok(SphereMaxResult {
                    z,
                    lambda: 0.5 * lmax,
                    hard_case: true,
                    iterations: 0,
                });
            }
        }

        // Work in s = 2λ, s > λ_max.
        let norm_sq = |s: f64| -> f64 { (0..d).map(|i| (qt[i] / (s - vals[i])).powi(2)).sum() };
        let radius = r2.sqrt();
        let mut lo = lmax;
        let mut hi = lmax + qnorm / radius;
        let mut iterations = 0;
        while norm_sq(hi) > r2 {
            hi = lmax + 2.0 * (hi - lmax).max(f64::MIN_POSITIVE);
            iterations += 1;
            if iterations > MAX_ITERATIONS {
                return Err(Error::numerical(
                    "sphere_max could not bracket the secular root",
                ));
            }
        }
        let mut s = hi;
        loop {
            iterations += 1;
            let nz2 = norm_sq(s);
            let phi = nz2 - r2;
            if phi.abs() <= SECULAR_TOL * r2 {
                break;
            }
            if phi > 0.0 {
                lo = lo.max(s);
            } else {
                hi = hi.min(s);
            }
            if hi - lo <= 4.0 * f64::EPSILON * hi.abs().max(1.0) || iterations >= MAX_ITERATIONS {
                break;
            }
            // Newton on ψ(s) = 1/‖z(s)‖ − 1/r.
            let nz = nz2.sqrt();
            let cubic: f64 = (0..d).map(|i| qt[i] * qt[i] / (s - vals[i]).powi(3)).sum();
            let psi = 1.0 / nz - 1.0 / radius;
            let dpsi = cubic / (nz2 * nz);
            let mut next = s - psi / dpsi;
            if !(next > lo && next < hi) || !next.is_finite() {
                next = 0.5 * (lo + hi);
            }
            s = next;
        }

        let mut zt = DVector::from_fn(d, |i, _| qt[i] / (s - vals[i]));
        let mut hard_case = false;
        let nz2 = zt.norm_squared();
        if (nz2 - r2).abs() > 1e-10 * r2 {
            // The root sits closer to λ_max than double precision resolves:
            // rebuild the top-eigenspace part so the iterate lies on the sphere.
            let rest: f64 = (0..d)
                .filter(|&i| !self.is_top(i))
                .map(|i| zt[i] * zt[i])
                .sum();
            let top_sq: f64 = (0..d)
                .filter(|&i| self.is_top(i))
                .map(|i| zt[i] * zt[i])
                .sum();
            if top_sq > 0.0 && rest < r2 {
                let scale = ((r2 - rest) / top_sq).sqrt();
                for i in (0..d).filter(|&i| self.is_top(i)) {
                    zt[i] *= scale;
                }
                hard_case = true;
            } else {
                return Err(Error::numerical(format!(
                    "secular equation unresolved: |phi| = {:e} with r2 = {r2:e}",
                    (nz2 - r2).abs()
                )));
            }
        }
        Ok(SphereMaxResult {
            z: &self.eig.vectors * zt,
            lambda: 0.5 * s,
            hard_case,
            iterations,
        })
    }
}

/// Maximize `½zᵀMz + qᵀz` subject to `‖z‖² ≤ r2` for symmetric PSD `M`.
pub fn sphere_max(m: &DMatrix<f64>, q: &DVector<f64>, r2: f64) -> Result<SphereMaxResult> {
    SphereMaximizer::new(m)?.solve(q, r2)
}
