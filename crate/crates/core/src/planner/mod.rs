//! The planners' layer: sphere-constrained best responses, best-response
//! dynamics in both planner modes, the transferable-budget problem and the
//! direction diagnostics built from shadow prices.

mod brd;
mod sphere;

use nalgebra::{DMatrix, DVector};

pub use brd::{
    best_response, brd_solve, brd_solve_with, build_a_tilde, half_off_diagonal,
    solve_noncoop_via_tilde, solve_noncoop_via_tilde_with, BlockGame, BrdInit, BrdOptions,
    EquilibriumSolution, PlannerMode, Schedule,
};
pub use sphere::{sphere_max, SphereMaxResult, SphereMaximizer};

use crate::equilibrium::InfluenceOperators;
use crate::error::{Error, Result};
use crate::game::{Game, InterventionProfile};
use crate::linalg::{cosine, SymEigen};

/// Optimum of the single-ball problem `max W(y) s.t. ‖y‖² ≤ C`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferableSolution {
    pub y: InterventionProfile,
    /// Common shadow price of the pooled budget.
    pub lambda: f64,
}

pub fn solve_transferable(game: &Game, total_budget: f64) -> Result<TransferableSolution> {
    let ops = InfluenceOperators::new(game)?;
    solve_transferable_with(game, &ops, total_budget)
}

pub fn solve_transferable_with(
    game: &Game,
    ops: &InfluenceOperators,
    total_budget: f64,
) -> Result<TransferableSolution> {
    if !(total_budget.is_finite() && total_budget >= 0.0) {
        return Err(Error::structural(format!(
            "total budget must be finite and >= 0, got {total_budget}"
        )));
    }
    let q = &ops.a * game.b();
    let res = SphereMaximizer::new(&ops.a)?.solve(&q, total_budget)?;
    Ok(TransferableSolution {
        y: InterventionProfile(res.z),
        lambda: res.lambda,
    })
}

fn inverse_price_diagonal(game: &Game, solution: &EquilibriumSolution) -> Result<DVector<f64>> {
    if solution.shadow_prices.len() != game.num_groups() {
        return Err(Error::structural(
            "solution does not match the game's partition",
        ));
    }
    if let Some((k, lam)) = solution
        .shadow_prices
        .iter()
        .enumerate()
        .find(|(_, l)| l.is_nan() || **l <= 0.0)
    {
        return Err(Error::precondition(format!(
            "degenerate price scaling: shadow price of group {k} is {lam}"
        )));
    }
    let p = game.partition();
    Ok(DVector::from_fn(game.n(), |i, _| {
        1.0 / solution.shadow_prices[p.group_of(i)]
    }))
}

/// `|ρ(y*, v_max(B̃))|` with `B = A^{1/2} D A^{1/2}`, `D = diag(1/λ*_k)` and
/// `B̃` the half-off-diagonal version of `B`.
pub fn direction_similarity(
    game: &Game,
    ops: &InfluenceOperators,
    solution: &EquilibriumSolution,
) -> Result<f64> {
    let d = inverse_price_diagonal(game, solution)?;
    let b = &ops.a_sqrt * DMatrix::from_diagonal(&d) * &ops.a_sqrt;
    let b_tilde = half_off_diagonal(&b, game.partition());
    let v = SymEigen::new(&b_tilde)?.top_vector();
    Ok(cosine(solution.y_star.as_vector(), &v).abs())
}

/// Direction check that follows from the stationarity conditions: for
/// `b = 0` the equilibrium satisfies `Ã y* = 2Λ y*`, so `D^{-1/2} y*` is the
/// top eigenvector of `D^{1/2} Ã D^{1/2}`. Returns `|ρ(y*, D^{1/2} u_max)|`.
pub fn stationarity_direction_similarity(
    game: &Game,
    ops: &InfluenceOperators,
    solution: &EquilibriumSolution,
) -> Result<f64> {
    let d = inverse_price_diagonal(game, solution)?;
    let half = d.map(f64::sqrt);
    let tilde = build_a_tilde(ops, game.partition());
    let scaled = DMatrix::from_fn(game.n(), game.n(), |i, j| half[i] * tilde[(i, j)] * half[j]);
    let u = SymEigen::new(&scaled)?.top_vector();
    let mapped = half.component_mul(&u);
    Ok(cosine(solution.y_star.as_vector(), &mapped).abs())
}
