//! Planner best responses and best-response dynamics over group budgets.

use nalgebra::{DMatrix, DVector};
use serde::{Serialize, Serializer};

use super::sphere::{SphereMaxResult, SphereMaximizer};
use crate::equilibrium::InfluenceOperators;
use crate::error::{Error, Result};
use crate::game::{BudgetAllocation, Game, InterventionProfile, Partition};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PlannerMode {
    /// Each planner maximizes its own group's welfare.
    NonCooperative,
    /// Every planner maximizes social welfare.
    Cooperative,
}

impl PlannerMode {
    /// Weight on the other groups' terms in a planner's linear coefficient.
    pub fn spillover_weight(self) -> f64 {
        match self {
            PlannerMode::NonCooperative => 0.5,
            PlannerMode::Cooperative => 1.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PlannerMode::NonCooperative => "noncooperative",
            PlannerMode::Cooperative => "cooperative",
        }
    }
}

/// Update order within one sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Schedule {
    /// Groups respond in index order to the freshest profile.
    #[default]
    GaussSeidel,
    /// Groups respond simultaneously to the previous sweep's profile.
    Jacobi,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub enum BrdInit {
    #[default]
    Zeros,
    Given(DVector<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BrdOptions {
    /// Stop once a full sweep moves `y` by less than this in sup-norm.
    pub tol: f64,
    pub max_sweeps: usize,
    pub init: BrdInit,
    pub schedule: Schedule,
}

impl Default for BrdOptions {
    fn default() -> Self {
        BrdOptions {
            tol: 1e-10,
            max_sweeps: 10_000,
            init: BrdInit::Zeros,
            schedule: Schedule::GaussSeidel,
        }
    }
}

impl BrdOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::structural(format!(
                "tolerance must be positive, got {}",
                self.tol
            )));
        }
        if self.max_sweeps == 0 {
            return Err(Error::structural("max_sweeps must be at least 1"));
        }
        Ok(())
    }

    pub fn with_init(mut self, y0: DVector<f64>) -> Self {
        self.init = BrdInit::Given(y0);
        self
    }
}

/// Converged planner equilibrium and the agents' response to it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquilibriumSolution {
    #[serde(rename = "y", serialize_with = "ser_profile")]
    pub y_star: InterventionProfile,
    #[serde(rename = "x", serialize_with = "ser_vector")]
    pub x_star: DVector<f64>,
    #[serde(rename = "lambda")]
    pub shadow_prices: Vec<f64>,
    pub mode: PlannerMode,
    pub iterations: usize,
    pub residual: f64,
    /// Groups with `C_k = 0`; their shadow price is the conventional `λ_max(A_kk)/2`.
    #[serde(skip)]
    pub zero_budget: Vec<bool>,
}

fn ser_vector<S: Serializer>(v: &DVector<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_seq(v.iter())
}

fn ser_profile<S: Serializer>(
    v: &InterventionProfile,
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    ser_vector(&v.0, s)
}

impl EquilibriumSolution {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("solution serializes")
    }
}

struct GroupBlock {
    /// Rows `S_k` of the coupling matrix, off-diagonal blocks pre-weighted.
    rows: DMatrix<f64>,
    own: DMatrix<f64>,
    solver: SphereMaximizer,
}

/// Block-coordinate planner game with objective blocks taken from a
/// symmetric coupling matrix `K`: planner `k` maximizes
/// `½ y_kᵀK_kk y_k + q_kᵀ y_k` with
/// `q_k = K_kk b_k + w Σ_{l≠k} K_kl (y_l + b_l)`.
pub struct BlockGame<'a> {
    partition: &'a Partition,
    b: &'a DVector<f64>,
    blocks: Vec<GroupBlock>,
}

impl<'a> BlockGame<'a> {
    pub fn new(
        coupling: &DMatrix<f64>,
        spillover_weight: f64,
        partition: &'a Partition,
        b: &'a DVector<f64>,
    ) -> Result<Self> {
        let n = partition.num_agents();
        if coupling.nrows() != n || coupling.ncols() != n || b.len() != n {
            return Err(Error::structural(
                "coupling matrix, benefits and partition disagree in size",
            ));
        }
        let mut blocks = Vec::with_capacity(partition.num_groups());
        for (k, members) in partition.groups().iter().enumerate() {
            let mut rows = DMatrix::zeros(members.len(), n);
            for (r, &i) in members.iter().enumerate() {
                for j in 0..n {
                    let w = if partition.group_of(j) == k {
                        1.0
                    } else {
                        spillover_weight
                    };
                    rows[(r, j)] = w * coupling[(i, j)];
                }
            }
            let own = partition.block_unchecked(coupling, k, k);
            let solver = SphereMaximizer::new(&own)?;
            blocks.push(GroupBlock { rows, own, solver });
        }
        Ok(BlockGame {
            partition,
            b,
            blocks,
        })
    }

    /// Linear coefficient of planner `k`'s objective given the full profile.
    pub fn linear_term(&self, y: &DVector<f64>, k: usize) -> DVector<f64> {
        let blk = &self.blocks[k];
        let v = self.b + y;
        &blk.rows * v - &blk.own * self.partition.gather_unchecked(y, k)
    }

    pub fn respond(&self, y: &DVector<f64>, k: usize, cap: f64) -> Result<SphereMaxResult> {
        let q = self.linear_term(y, k);
        self.blocks[k].solver.solve(&q, cap)
    }

    pub fn top_eigenvalue(&self, k: usize) -> f64 {
        self.blocks[k].solver.lambda_max()
    }

    /// Best-response dynamics; returns `(y, multipliers, sweeps, residual)`.
    pub fn run(
        &self,
        alloc: &BudgetAllocation,
        opts: &BrdOptions,
    ) -> Result<(DVector<f64>, Vec<f64>, usize, f64)> {
        opts.validate()?;
        alloc.check_against(self.partition)?;
        let n = self.partition.num_agents();
        let m = self.partition.num_groups();
        let mut y = match &opts.init {
            BrdInit::Zeros => DVector::zeros(n),
            BrdInit::Given(y0) => {
                if y0.len() != n {
                    return Err(Error::structural(format!(
                        "initial profile has length {}, expected {n}",
                        y0.len()
                    )));
                }
                y0.clone()
            }
        };
        let mut lambdas = vec![0.0; m];
        let mut residual = f64::INFINITY;
        for sweep in 1..=opts.max_sweeps {
            let previous = y.clone();
            for (k, &cap) in alloc.caps().iter().enumerate() {
                let source = match opts.schedule {
                    Schedule::GaussSeidel => &y,
                    Schedule::Jacobi => &previous,
                };
                let res = self.respond(source, k, cap)?;
                lambdas[k] = res.lambda;
                self.partition.scatter_unchecked(&mut y, k, &res.z);
            }
            residual = (&y - &previous).amax();
            if !residual.is_finite() {
                return Err(Error::numerical("best-response iterate became non-finite"));
            }
            if residual < opts.tol {
                return Ok((y, lambdas, sweep, residual));
            }
        }
        Err(Error::NonConvergence {
            sweeps: opts.max_sweeps,
            residual,
        })
    }
}

fn finish(
    game: &Game,
    ops: &InfluenceOperators,
    alloc: &BudgetAllocation,
    mode: PlannerMode,
    (y, shadow_prices, iterations, residual): (DVector<f64>, Vec<f64>, usize, f64),
) -> EquilibriumSolution {
    let x_star = ops.nash_equilibrium(game.b(), &y);
    EquilibriumSolution {
        y_star: InterventionProfile(y),
        x_star,
        shadow_prices,
        mode,
        iterations,
        residual,
        zero_budget: alloc.caps().iter().map(|&c| c == 0.0).collect(),
    }
}

/// Planner `k`'s best response to the rest of `y` (its own slice is ignored).
pub fn best_response(
    game: &Game,
    ops: &InfluenceOperators,
    alloc: &BudgetAllocation,
    y: &InterventionProfile,
    k: usize,
    mode: PlannerMode,
) -> Result<DVector<f64>> {
    alloc.check_against(game.partition())?;
    if k >= game.num_groups() {
        return Err(Error::structural(format!("group index {k} out of range")));
    }
    if y.len() != game.n() {
        return Err(Error::structural("intervention length does not match game"));
    }
    let bg = BlockGame::new(&ops.a, mode.spillover_weight(), game.partition(), game.b())?;
    Ok(bg.respond(y.as_vector(), k, alloc.caps()[k])?.z)
}

/// Planners' best-response dynamics to the unique equilibrium.
pub fn brd_solve(
    game: &Game,
    alloc: &BudgetAllocation,
    mode: PlannerMode,
    opts: &BrdOptions,
) -> Result<EquilibriumSolution> {
    let ops = InfluenceOperators::new(game)?;
    brd_solve_with(game, &ops, alloc, mode, opts)
}

pub fn brd_solve_with(
    game: &Game,
    ops: &InfluenceOperators,
    alloc: &BudgetAllocation,
    mode: PlannerMode,
    opts: &BrdOptions,
) -> Result<EquilibriumSolution> {
    let bg = BlockGame::new(&ops.a, mode.spillover_weight(), game.partition(), game.b())?;
    let out = bg.run(alloc, opts)?;
    Ok(finish(game, ops, alloc, mode, out))
}

/// `Ã`: diagonal blocks of `M` kept, off-diagonal blocks halved.
pub fn half_off_diagonal(m: &DMatrix<f64>, partition: &Partition) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| {
        if partition.group_of(i) == partition.group_of(j) {
            m[(i, j)]
        } else {
            0.5 * m[(i, j)]
        }
    })
}

pub fn build_a_tilde(ops: &InfluenceOperators, partition: &Partition) -> DMatrix<f64> {
    half_off_diagonal(&ops.a, partition)
}

/// Non-cooperative equilibrium computed by maximizing the potential
/// `½(y+b)ᵀÃ(y+b)` block by block.
pub fn solve_noncoop_via_tilde(
    game: &Game,
    alloc: &BudgetAllocation,
    opts: &BrdOptions,
) -> Result<EquilibriumSolution> {
    let ops = InfluenceOperators::new(game)?;
    solve_noncoop_via_tilde_with(game, &ops, alloc, opts)
}

pub fn solve_noncoop_via_tilde_with(
    game: &Game,
    ops: &InfluenceOperators,
    alloc: &BudgetAllocation,
    opts: &BrdOptions,
) -> Result<EquilibriumSolution> {
    opts.validate()?;
    let p = game.partition();
    alloc.check_against(p)?;
    let tilde = build_a_tilde(ops, p);
    let b = game.b();
    let solvers = (0..p.num_groups())
        .map(|k| SphereMaximizer::new(&p.block_unchecked(&tilde, k, k)))
        .collect::<Result<Vec<_>>>()?;
    let mut y = match &opts.init {
        BrdInit::Zeros => DVector::zeros(game.n()),
        BrdInit::Given(y0) if y0.len() == game.n() => y0.clone(),
        BrdInit::Given(y0) => {
            return Err(Error::structural(format!(
                "initial profile has length {}, expected {}",
                y0.len(),
                game.n()
            )))
        }
    };
    // Exact block ascent on the potential ½(y+b)ᵀÃ(y+b). Linear term of block
    // k: Ã_kk b_k + Σ_{l≠k} Ã_kl (y_l + b_l).
    let mut lambdas = vec![0.0; p.num_groups()];
    let mut residual = f64::INFINITY;
    for sweep in 1..=opts.max_sweeps {
        let previous = y.clone();
        for (k, solver) in solvers.iter().enumerate() {
            let mut q = p.block_unchecked(&tilde, k, k) * p.gather_unchecked(b, k);
            for l in (0..p.num_groups()).filter(|&l| l != k) {
                let v = p.gather_unchecked(&y, l) + p.gather_unchecked(b, l);
                q += p.block_unchecked(&tilde, k, l) * v;
            }
            let res = solver.solve(&q, alloc.caps()[k])?;
            lambdas[k] = res.lambda;
            p.scatter_unchecked(&mut y, k, &res.z);
        }
        residual = (&y - &previous).amax();
        if !residual.is_finite() {
            return Err(Error::numerical(
                "potential ascent iterate became non-finite",
            ));
        }
        if residual < opts.tol {
            return Ok(finish(
                game,
                ops,
                alloc,
                PlannerMode::NonCooperative,
                (y, lambdas, sweep, residual),
            ));
        }
    }
    Err(Error::NonConvergence {
        sweeps: opts.max_sweeps,
        residual,
    })
}
