//! Budget-constrained interventions in linear-quadratic network games with
//! several group planners.
//!
//! Agents play `u_i = (b_i+y_i)x_i − ½x_i² + x_i Σ_j g_ij x_j`; each group's
//! planner chooses `y_{S_k}` subject to `‖y_{S_k}‖² ≤ C_k`, either for its own
//! group's welfare or for social welfare.

pub mod efficiency;
pub mod equilibrium;
pub mod error;
pub mod experiment;
pub mod game;
pub mod linalg;
pub mod netgen;
pub mod planner;

pub use efficiency::{
    l1_efficiency, l2_efficiency, l2_lower_bound, transfer_incentive, EfficiencyReport,
};
pub use equilibrium::{agent_nash_equilibrium, social_best_actions, InfluenceOperators};
pub use error::{Error, Result};
pub use game::{validate_game, BudgetAllocation, Game, GameFile, InterventionProfile, Partition};
pub use planner::{
    brd_solve, solve_noncoop_via_tilde, solve_transferable, BrdOptions, EquilibriumSolution,
    PlannerMode,
};
