//! Agent-level closed forms: the Nash equilibrium `x* = (I−G)⁻¹(b+y)`, the
//! socially optimal actions `x̄ = (I−2G)⁻¹(b+y)`, utilities and the welfare
//! functionals the planners optimize.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::game::{Game, InterventionProfile, Partition};
use crate::linalg::{symmetrize, SymEigen};

/// Largest acceptable condition number of `I − G` (or `I − 2G`).
pub const MAX_CONDITION: f64 = 1e12;

const RESIDUAL_TOL: f64 = 1e-10;

/// `(I−G)⁻¹`, `A = (I−G)⁻²` and the symmetric root `A^{1/2}` for one game.
#[derive(Debug, Clone)]
pub struct InfluenceOperators {
    pub inv_i_minus_g: DMatrix<f64>,
    pub a: DMatrix<f64>,
    pub a_sqrt: DMatrix<f64>,
    lambda_max_g: f64,
}

impl InfluenceOperators {
    pub fn new(game: &Game) -> Result<Self> {
        if !game.is_symmetric() {
            return Err(Error::precondition(
                "influence operators need a symmetric G",
            ));
        }
        let n = game.n();
        let i_minus_g = DMatrix::identity(n, n) - game.g();
        let eig = SymEigen::new(&i_minus_g)?;
        let lambda_max_g = 1.0 - eig.min();
        check_conditioning(&eig, lambda_max_g, "I - G")?;

        let inv_i_minus_g = i_minus_g.clone().lu().try_inverse().ok_or_else(|| {
            Error::numerical(format!(
                "I - G is singular (lambda_max(G) = {lambda_max_g})"
            ))
        })?;
        let inv_i_minus_g = symmetrize(&inv_i_minus_g);
        let a = symmetrize(&(&inv_i_minus_g * &inv_i_minus_g));
        // A^{1/2} = V diag(1/μ) Vᵀ where μ are the eigenvalues of I − G.
        let a_sqrt = eig.map(|mu| 1.0 / mu);
        Ok(InfluenceOperators {
            inv_i_minus_g,
            a,
            a_sqrt,
            lambda_max_g,
        })
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn lambda_max_g(&self) -> f64 {
        self.lambda_max_g
    }

    /// `x* = (I−G)⁻¹(b+y)`.
    pub fn nash_equilibrium(&self, b: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
        &self.inv_i_minus_g * (b + y)
    }

    /// `W(y) = ½(y+b)ᵀA(y+b)`.
    pub fn social_welfare(&self, b: &DVector<f64>, y: &DVector<f64>) -> f64 {
        let v = b + y;
        0.5 * v.dot(&(&self.a * &v))
    }

    /// `W_k(y) = ½‖(A^{1/2}(y+b))_{S_k}‖²`.
    pub fn group_welfare(
        &self,
        partition: &Partition,
        b: &DVector<f64>,
        y: &DVector<f64>,
        k: usize,
    ) -> f64 {
        let x = &self.a_sqrt * (b + y);
        0.5 * partition
            .members(k)
            .iter()
            .map(|&i| x[i] * x[i])
            .sum::<f64>()
    }

    /// `∇_y W = A(y+b)`.
    pub fn welfare_gradient(&self, b: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
        &self.a * (b + y)
    }

    /// Block-gradient used by the group planners' best responses:
    /// `A_kk(y_k+b_k) + ½ Σ_{l≠k} A_kl(y_l+b_l)`.
    ///
    /// This is the gradient of `½(y+b)ᵀÃ(y+b)` with respect to `y_{S_k}`. It
    /// agrees with the true derivative of `W_k` only to first order in `G`;
    /// see [`InfluenceOperators::group_welfare_gradient_exact`].
    pub fn group_planner_gradient(
        &self,
        partition: &Partition,
        b: &DVector<f64>,
        y: &DVector<f64>,
        k: usize,
    ) -> DVector<f64> {
        let v = b + y;
        let mut grad = DVector::zeros(partition.members(k).len());
        for l in 0..partition.num_groups() {
            let coeff = if l == k { 1.0 } else { 0.5 };
            let blk = partition.block_unchecked(&self.a, k, l);
            grad += coeff * blk * partition.gather_unchecked(&v, l);
        }
        grad
    }

    /// Exact `∇_{y_{S_j}} W_k = (A^{1/2})_{S_j,S_k} x*_{S_k}`.
    pub fn group_welfare_gradient_exact(
        &self,
        partition: &Partition,
        b: &DVector<f64>,
        y: &DVector<f64>,
        k: usize,
        j: usize,
    ) -> DVector<f64> {
        let x = self.nash_equilibrium(b, y);
        partition.block_unchecked(&self.a_sqrt, j, k) * partition.gather_unchecked(&x, k)
    }
}

fn check_conditioning(eig: &SymEigen, lambda_max_g: f64, what: &str) -> Result<()> {
    let lo = eig.min();
    let hi = eig.max();
    if lo <= 0.0 {
        return Err(Error::precondition(format!(
            "{what} is not positive definite (lambda_max(G) = {lambda_max_g})"
        )));
    }
    if hi / lo > MAX_CONDITION {
        return Err(Error::numerical(format!(
            "{what} is ill-conditioned (condition {:e}, lambda_max(G) = {lambda_max_g})",
            hi / lo
        )));
    }
    Ok(())
}

/// Solve `(I − s·G) x = b + y` with a residual check.
fn solve_shifted(game: &Game, y: &InterventionProfile, s: f64, what: &str) -> Result<DVector<f64>> {
    if y.len() != game.n() {
        return Err(Error::structural(format!(
            "intervention has length {}, game has {} agents",
            y.len(),
            game.n()
        )));
    }
    let limit = 1.0 / s;
    let lmax = game.require_lambda_max_below(limit, what)?;
    let n = game.n();
    let system = DMatrix::identity(n, n) - game.g() * s;
    let eig = SymEigen::new(&system)?;
    check_conditioning(&eig, lmax, if s == 1.0 { "I - G" } else { "I - 2G" })?;

    let rhs = game.b() + y.as_vector();
    let x = system.clone().lu().solve(&rhs).ok_or_else(|| {
        Error::numerical(format!("{what}: singular system (lambda_max(G) = {lmax})"))
    })?;
    let residual = (&system * &x - &rhs).amax();
    if residual > RESIDUAL_TOL * (1.0 + rhs.amax()) {
        return Err(Error::numerical(format!(
            "{what}: residual {residual:e} exceeds tolerance (lambda_max(G) = {lmax})"
        )));
    }
    Ok(x)
}

/// The agents' unique Nash equilibrium under intervention `y`.
pub fn agent_nash_equilibrium(game: &Game, y: &InterventionProfile) -> Result<DVector<f64>> {
    solve_shifted(game, y, 1.0, "Nash equilibrium")
}

/// Action profile maximizing `Σ_i u_i` for fixed `y`. Needs `λ_max(G) < ½`.
pub fn social_best_actions(game: &Game, y: &InterventionProfile) -> Result<DVector<f64>> {
    solve_shifted(game, y, 2.0, "socially optimal actions")
}

/// `u_i = (b_i+y_i)x_i − ½x_i² + x_i Σ_{j≠i} g_ij x_j`.
pub fn agent_utility(game: &Game, x: &DVector<f64>, y: &InterventionProfile, i: usize) -> f64 {
    let g = game.g();
    let spill: f64 = (0..game.n())
        .filter(|&j| j != i)
        .map(|j| g[(i, j)] * x[j])
        .sum();
    (game.b()[i] + y.0[i]) * x[i] - 0.5 * x[i] * x[i] + x[i] * spill
}

/// `Σ_i u_i(x, y)` for an arbitrary action profile.
pub fn social_welfare_at_actions(game: &Game, x: &DVector<f64>, y: &InterventionProfile) -> f64 {
    (0..game.n()).map(|i| agent_utility(game, x, y, i)).sum()
}

/// Group welfare at the agents' equilibrium, `½‖x*_{S_k}‖²`.
pub fn group_welfare_at_ne(game: &Game, y: &InterventionProfile, k: usize) -> Result<f64> {
    let x = agent_nash_equilibrium(game, y)?;
    let xk = game.partition().gather(&x, k)?;
    Ok(0.5 * xk.norm_squared())
}

/// `W(y) = ½(y+b)ᵀA(y+b)`.
pub fn social_welfare_at_ne(game: &Game, y: &InterventionProfile) -> Result<f64> {
    if y.len() != game.n() {
        return Err(Error::structural("intervention length does not match game"));
    }
    let ops = InfluenceOperators::new(game)?;
    Ok(ops.social_welfare(game.b(), y.as_vector()))
}

pub fn influence_operators(game: &Game) -> Result<InfluenceOperators> {
    InfluenceOperators::new(game)
}
