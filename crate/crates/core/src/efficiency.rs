//! Two-level efficiency: agents' equilibrium against the welfare-maximizing
//! actions (L1), and non-cooperative against cooperative planners (L2), plus
//! the shadow-price lower bound on L2 and the pairwise budget-transfer test.

use nalgebra::DVector;
use serde::Serialize;

use crate::equilibrium::{agent_nash_equilibrium, social_best_actions, InfluenceOperators};
use crate::error::{Error, Result};
use crate::game::{BudgetAllocation, Game, InterventionProfile, Partition};
use crate::linalg::SymEigen;
use crate::planner::{brd_solve_with, BrdOptions, EquilibriumSolution, PlannerMode};

/// `C_k / ‖b_{S_k}‖²` at or above which the large-budget bound is reported.
///
/// The bound is exact in its premise only for `b = 0`; with benefits present
/// its excess over `e_L2` shrinks roughly like `(‖b‖²/C)^{1/2}` and can still
/// be a few percent at this ratio.
pub const BOUND_BUDGET_RATIO: f64 = 100.0;

/// Budget moved in the limiting transfer test when the receiver has none.
pub const TRANSFER_EPSILON: f64 = 1e-6;

/// `U(x*, y) / max_x U(x, y)`. Needs `λ_max(G) < ½`.
///
/// With `v = b + y` the maximum is attained at `x̄ = (I−2G)⁻¹v` and equals
/// `½ vᵀ(I−2G)⁻¹v`; at the equilibrium `U(x*) = ½‖x*‖²`.
pub fn l1_efficiency(game: &Game, y: &InterventionProfile) -> Result<f64> {
    let x_bar = social_best_actions(game, y)?;
    let x_star = agent_nash_equilibrium(game, y)?;
    let v = game.b() + y.as_vector();
    let best = 0.5 * v.dot(&x_bar);
    if best == 0.0 {
        return Err(Error::Undefined(
            "b + y = 0, both welfare values vanish".into(),
        ));
    }
    Ok(0.5 * x_star.norm_squared() / best)
}

/// `ρ_k`, the largest eigenvalue of the (positive definite) block `A_kk`.
pub fn group_block_spectral_radius(
    ops: &InfluenceOperators,
    partition: &Partition,
    k: usize,
) -> Result<f64> {
    let block = partition.matrix_block(&ops.a, k, k)?;
    let eig = SymEigen::new(&block)?;
    Ok(eig.max().abs().max(eig.min().abs()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LowerBound {
    pub value: f64,
    /// `Σ λ̄_k C_k`, equal to the cooperative welfare when `b = 0`.
    pub coop_welfare_identity: f64,
}

/// `Σ(2λ*_k − ½ρ_k)C_k / Σ λ̄_k C_k`.
pub fn l2_lower_bound(
    lambda_star: &[f64],
    lambda_bar: &[f64],
    rho: &[f64],
    caps: &[f64],
) -> Result<LowerBound> {
    let m = caps.len();
    if lambda_star.len() != m || lambda_bar.len() != m || rho.len() != m {
        return Err(Error::structural(
            "per-group inputs to the bound differ in length",
        ));
    }
    if let Some(c) = caps.iter().find(|c| c.is_nan() || **c < 0.0) {
        return Err(Error::structural(format!(
            "budget caps must be >= 0, got {c}"
        )));
    }
    let num: f64 = (0..m)
        .map(|k| (2.0 * lambda_star[k] - 0.5 * rho[k]) * caps[k])
        .sum();
    let den: f64 = (0..m).map(|k| lambda_bar[k] * caps[k]).sum();
    if den.is_nan() || den <= 0.0 {
        return Err(Error::Undefined(format!("bound denominator is {den}")));
    }
    Ok(LowerBound {
        value: num / den,
        coop_welfare_identity: den,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EfficiencyOptions {
    pub brd: BrdOptions,
    /// Also evaluate `e_L1` at the cooperative profile (skipped when `λ_max(G) ≥ ½`).
    pub compute_l1: bool,
}

impl Default for EfficiencyOptions {
    fn default() -> Self {
        EfficiencyOptions {
            brd: BrdOptions::default(),
            compute_l1: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EfficiencyReport {
    /// `None` when `λ_max(G) ≥ ½` or not requested.
    pub e_l1_at_ybar: Option<f64>,
    pub e_l2: f64,
    /// `e_L2 · e_L1(ȳ)`.
    pub overall: Option<f64>,
    /// `None` when all budgets are zero.
    pub l2_lower_bound: Option<f64>,
    pub bound_gap: Option<f64>,
    pub w_noncoop: f64,
    pub w_coop: f64,
    pub bound_applicable: bool,
    pub lambda_star: Vec<f64>,
    pub lambda_bar: Vec<f64>,
    pub rho: Vec<f64>,
    pub iterations_noncoop: usize,
    pub iterations_coop: usize,
}

impl EfficiencyReport {
    pub const CSV_HEADER: [&'static str; 8] = [
        "e_l1_at_ybar",
        "e_l2",
        "overall",
        "l2_lower_bound",
        "bound_gap",
        "w_noncoop",
        "w_coop",
        "bound_applicable",
    ];

    /// Fields in [`EfficiencyReport::CSV_HEADER`] order; missing values are empty.
    pub fn csv_record(&self) -> Vec<String> {
        vec![
            opt(self.e_l1_at_ybar),
            self.e_l2.to_string(),
            opt(self.overall),
            opt(self.l2_lower_bound),
            opt(self.bound_gap),
            self.w_noncoop.to_string(),
            self.w_coop.to_string(),
            self.bound_applicable.to_string(),
        ]
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Whether every group's budget dominates its own benefits (or `b = 0`).
pub fn bound_applicable(game: &Game, alloc: &BudgetAllocation) -> bool {
    let norms = game.partition().group_sq_norms(game.b());
    norms
        .iter()
        .zip(alloc.caps())
        .all(|(&bb, &c)| bb == 0.0 || c >= BOUND_BUDGET_RATIO * bb)
}

pub fn l2_efficiency(
    game: &Game,
    alloc: &BudgetAllocation,
    opts: &EfficiencyOptions,
) -> Result<EfficiencyReport> {
    let ops = InfluenceOperators::new(game)?;
    l2_efficiency_with(game, &ops, alloc, opts)
}

pub fn l2_efficiency_with(
    game: &Game,
    ops: &InfluenceOperators,
    alloc: &BudgetAllocation,
    opts: &EfficiencyOptions,
) -> Result<EfficiencyReport> {
    let noncoop = brd_solve_with(game, ops, alloc, PlannerMode::NonCooperative, &opts.brd)?;
    let coop = brd_solve_with(game, ops, alloc, PlannerMode::Cooperative, &opts.brd)?;
    report_from_solutions(game, ops, alloc, &noncoop, &coop, opts.compute_l1)
}

/// Assemble a report from already solved equilibria of both modes.
pub fn report_from_solutions(
    game: &Game,
    ops: &InfluenceOperators,
    alloc: &BudgetAllocation,
    noncoop: &EquilibriumSolution,
    coop: &EquilibriumSolution,
    compute_l1: bool,
) -> Result<EfficiencyReport> {
    let w_noncoop = ops.social_welfare(game.b(), noncoop.y_star.as_vector());
    let w_coop = ops.social_welfare(game.b(), coop.y_star.as_vector());
    let e_l2 = if w_coop == 0.0 {
        1.0
    } else {
        w_noncoop / w_coop
    };

    let e_l1_at_ybar = if compute_l1 && ops.lambda_max_g() < 0.5 {
        match l1_efficiency(game, &coop.y_star) {
            Ok(v) => Some(v),
            Err(Error::Undefined(_)) => Some(1.0),
            Err(Error::Precondition(_)) => None,
            Err(e) => return Err(e),
        }
    } else {
        None
    };

    let rho = (0..game.num_groups())
        .map(|k| group_block_spectral_radius(ops, game.partition(), k))
        .collect::<Result<Vec<_>>>()?;
    let l2_lower_bound = match l2_lower_bound(
        &noncoop.shadow_prices,
        &coop.shadow_prices,
        &rho,
        alloc.caps(),
    ) {
        Ok(b) => Some(b.value),
        Err(Error::Undefined(_)) => None,
        Err(e) => return Err(e),
    };

    Ok(EfficiencyReport {
        e_l1_at_ybar,
        e_l2,
        overall: e_l1_at_ybar.map(|e| e * e_l2),
        l2_lower_bound,
        bound_gap: l2_lower_bound.map(|b| e_l2 - b),
        w_noncoop,
        w_coop,
        bound_applicable: bound_applicable(game, alloc),
        lambda_star: noncoop.shadow_prices.clone(),
        lambda_bar: coop.shadow_prices.clone(),
        rho,
        iterations_noncoop: noncoop.iterations,
        iterations_coop: coop.iterations,
    })
}

/// Which inequality decides whether planner `k` gains by giving budget to `l`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TransferForm {
    /// `(C_k − C_l)(∇_l W_k)ᵀy_l ≥ C_l(∇_k W_k)ᵀy_k`.
    #[default]
    AppendixProof,
    /// `(C_k − C_l)(∇_l W_l)ᵀy_k ≥ C_l(∇_k W_k)ᵀy_k`; needs `N_k = N_l`.
    MainText,
    /// Sign of the first-order change of `W_k` when budget moves from `k` to
    /// `l` along the current directions: `C_k(∇_l W_k)ᵀy_l ≥ C_l(∇_k W_k)ᵀy_k`.
    FirstOrder,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TransferIncentive {
    pub incentive: bool,
    pub lhs: f64,
    pub rhs: f64,
}

/// Does planner `k` benefit from transferring budget to neighboring group `l`?
///
/// When `C_l = 0` the inequality is degenerate; the test then moves
/// [`TRANSFER_EPSILON`] of budget, re-solves the non-cooperative equilibrium
/// and compares `W_k` (`lhs` is the new value, `rhs` the old one).
pub fn transfer_incentive(
    game: &Game,
    ops: &InfluenceOperators,
    alloc: &BudgetAllocation,
    solution: &EquilibriumSolution,
    k: usize,
    l: usize,
    form: TransferForm,
) -> Result<TransferIncentive> {
    let p = game.partition();
    let m = p.num_groups();
    if k >= m || l >= m || k == l {
        return Err(Error::structural(format!(
            "need two distinct groups, got {k} and {l}"
        )));
    }
    alloc.check_against(p)?;
    if solution.mode != PlannerMode::NonCooperative {
        return Err(Error::precondition(
            "transfer test needs a non-cooperative solution",
        ));
    }
    if p.matrix_block(&ops.a, k, l)?.iter().all(|&v| v == 0.0) {
        return Err(Error::precondition(format!(
            "groups {k} and {l} are not neighbors"
        )));
    }

    let (ck, cl) = (alloc.caps()[k], alloc.caps()[l]);
    if cl == 0.0 {
        return limiting_transfer(game, ops, alloc, solution, k, l);
    }

    let b = game.b();
    let y = solution.y_star.as_vector();
    let yk = p.gather(y, k)?;
    let yl = p.gather(y, l)?;
    let grad_kk = ops.group_welfare_gradient_exact(p, b, y, k, k);
    let rhs = cl * grad_kk.dot(&yk);
    let lhs = match form {
        TransferForm::AppendixProof => {
            (ck - cl) * ops.group_welfare_gradient_exact(p, b, y, k, l).dot(&yl)
        }
        TransferForm::FirstOrder => ck * ops.group_welfare_gradient_exact(p, b, y, k, l).dot(&yl),
        TransferForm::MainText => {
            let grad_ll = ops.group_welfare_gradient_exact(p, b, y, l, l);
            if grad_ll.len() != yk.len() {
                return Err(Error::precondition(format!(
                    "main-text transfer form pairs vectors of lengths {} and {}",
                    grad_ll.len(),
                    yk.len()
                )));
            }
            (ck - cl) * grad_ll.dot(&yk)
        }
    };
    Ok(TransferIncentive {
        incentive: lhs >= rhs,
        lhs,
        rhs,
    })
}

fn limiting_transfer(
    game: &Game,
    ops: &InfluenceOperators,
    alloc: &BudgetAllocation,
    solution: &EquilibriumSolution,
    k: usize,
    l: usize,
) -> Result<TransferIncentive> {
    let mut caps = alloc.caps().to_vec();
    let eps = TRANSFER_EPSILON.min(caps[k]);
    if eps == 0.0 {
        return Ok(TransferIncentive {
            incentive: false,
            lhs: 0.0,
            rhs: 0.0,
        });
    }
    caps[k] -= eps;
    caps[l] += eps;
    let shifted = BudgetAllocation::new(caps)?;
    let opts = BrdOptions::default().with_init(solution.y_star.0.clone());
    let after = brd_solve_with(game, ops, &shifted, PlannerMode::NonCooperative, &opts)?;
    let before = group_welfare(ops, game, &solution.y_star.0, k);
    let now = group_welfare(ops, game, &after.y_star.0, k);
    Ok(TransferIncentive {
        incentive: now > before,
        lhs: now,
        rhs: before,
    })
}

fn group_welfare(ops: &InfluenceOperators, game: &Game, y: &DVector<f64>, k: usize) -> f64 {
    ops.group_welfare(game.partition(), game.b(), y, k)
}
