//! Seeded random networks with two-level (within/between group) structure,
//! and the budget allocation rules used in experiments.
//!
//! Reproducibility contract (generator version 1): the seed initializes a
//! ChaCha20 stream cipher RNG (`rand_chacha` 0.3, `seed_from_u64`) which is
//! split into three streams with `set_stream`:
//!
//! * stream 0: one edge-existence draw per unordered pair `i < j`,
//! * stream 1: one strength draw per unordered pair `i < j` (drawn whether
//!   or not the edge exists),
//! * stream 2: one benefit draw per agent.
//!
//! Pairs are visited upper-triangle row-major. A draw is `u = gen::<f64>()`
//! in `[0, 1)`; an edge exists iff `u < p`, a strength is `lo + (hi − lo)·u`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::equilibrium::InfluenceOperators;
use crate::error::{Error, Result};
use crate::game::{BudgetAllocation, Game, GameFile, Partition, Provenance};
use crate::planner::solve_transferable_with;

pub const GENERATOR_NAME: &str = "chacha20/rand_chacha-0.3/streams:edges=0,strengths=1,benefits=2";
pub const GENERATOR_VERSION: u32 = 1;

const STREAM_EDGES: u64 = 0;
const STREAM_STRENGTHS: u64 = 1;
const STREAM_BENEFITS: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NetworkType {
    /// Strong within-group, weak between-group connections.
    Type1,
    /// Weak within-group, strong between-group connections.
    Type2,
    /// Evenly distributed connections.
    Type3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignPattern {
    AllPositive,
    /// Positive within groups, negative between groups.
    Conflicting,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    #[default]
    DivideByN,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub group_sizes: Vec<usize>,
    pub p_in: f64,
    pub p_out: f64,
    pub s_in_low: f64,
    pub s_in_high: f64,
    pub s_out_low: f64,
    pub s_out_high: f64,
    pub sign_pattern: SignPattern,
    pub b_low: f64,
    pub b_high: f64,
    #[serde(default)]
    pub normalization: Normalization,
    pub seed: u64,
}

impl NetworkSpec {
    pub fn validate(&self) -> Result<()> {
        let probs = [("p_in", self.p_in), ("p_out", self.p_out)];
        for (name, p) in probs {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::structural(format!(
                    "{name} must lie in [0, 1], got {p}"
                )));
            }
        }
        let ranges = [
            ("s_in", self.s_in_low, self.s_in_high),
            ("s_out", self.s_out_low, self.s_out_high),
        ];
        for (name, lo, hi) in ranges {
            if !(lo.is_finite() && hi.is_finite() && 0.0 <= lo && lo <= hi) {
                return Err(Error::structural(format!(
                    "{name} range must satisfy 0 <= low <= high, got [{lo}, {hi}]"
                )));
            }
        }
        if !(self.b_low.is_finite() && self.b_high.is_finite() && self.b_low <= self.b_high) {
            return Err(Error::structural(format!(
                "benefit range must satisfy low <= high, got [{}, {}]",
                self.b_low, self.b_high
            )));
        }
        if self.group_sizes.iter().sum::<usize>() == 0 {
            return Err(Error::structural("group sizes sum to zero"));
        }
        if self.group_sizes.contains(&0) {
            return Err(Error::structural("every group needs at least one agent"));
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_benefits(mut self, low: f64, high: f64) -> Self {
        self.b_low = low;
        self.b_high = high;
        self
    }

    pub fn with_group_sizes(mut self, sizes: Vec<usize>) -> Self {
        self.group_sizes = sizes;
        self
    }
}

const STRONG: (f64, f64, f64) = (0.8, 0.7, 0.9);
const WEAK: (f64, f64, f64) = (0.2, 0.1, 0.3);
const EVEN: (f64, f64, f64) = (0.5, 0.4, 0.6);

/// Two groups of 40 and 10 agents, benefits in `[0.1, 0.5]`, seed 0.
pub fn preset(network_type: NetworkType, sign_pattern: SignPattern) -> NetworkSpec {
    let (inner, outer) = match network_type {
        NetworkType::Type1 => (STRONG, WEAK),
        NetworkType::Type2 => (WEAK, STRONG),
        NetworkType::Type3 => (EVEN, EVEN),
    };
    NetworkSpec {
        group_sizes: vec![40, 10],
        p_in: inner.0,
        p_out: outer.0,
        s_in_low: inner.1,
        s_in_high: inner.2,
        s_out_low: outer.1,
        s_out_high: outer.2,
        sign_pattern,
        b_low: 0.1,
        b_high: 0.5,
        normalization: Normalization::DivideByN,
        seed: 0,
    }
}

fn stream(seed: u64, id: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

pub fn generate(spec: &NetworkSpec) -> Result<Game> {
    spec.validate()?;
    let partition = Partition::contiguous(&spec.group_sizes)?;
    let n = partition.num_agents();
    let scale = match spec.normalization {
        Normalization::DivideByN => n as f64,
    };

    let mut edges = stream(spec.seed, STREAM_EDGES);
    let mut strengths = stream(spec.seed, STREAM_STRENGTHS);
    let mut benefits = stream(spec.seed, STREAM_BENEFITS);

    let mut g = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            let exists: f64 = edges.gen();
            let u: f64 = strengths.gen();
            let same = partition.group_of(i) == partition.group_of(j);
            let (p, lo, hi) = if same {
                (spec.p_in, spec.s_in_low, spec.s_in_high)
            } else {
                (spec.p_out, spec.s_out_low, spec.s_out_high)
            };
            if exists < p {
                let magnitude = lo + (hi - lo) * u;
                let sign = match spec.sign_pattern {
                    SignPattern::Conflicting if !same => -1.0,
                    _ => 1.0,
                };
                let v = sign * magnitude / scale;
                g[(i, j)] = v;
                g[(j, i)] = v;
            }
        }
    }
    let b = DVector::from_fn(n, |_, _| {
        let u: f64 = benefits.gen();
        spec.b_low + (spec.b_high - spec.b_low) * u
    });
    Game::new(g, b, partition)
}

/// Generated game in file form, stamped with the generator identity.
pub fn generate_file(spec: &NetworkSpec) -> Result<GameFile> {
    let mut file = generate(spec)?.to_file();
    file.rng = Some(Provenance {
        generator: GENERATOR_NAME.to_string(),
        version: GENERATOR_VERSION,
        seed: spec.seed,
    });
    Ok(file)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AllocationRule {
    /// `C_k = (N_k / N) C`.
    Proportional,
    /// `C_k = C / M`.
    Identical,
    /// Group shares of the pooled-budget social optimum.
    CoopSociallyOptimal,
}

impl AllocationRule {
    pub const ALL: [AllocationRule; 3] = [
        AllocationRule::Proportional,
        AllocationRule::Identical,
        AllocationRule::CoopSociallyOptimal,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AllocationRule::Proportional => "proportional",
            AllocationRule::Identical => "identical",
            AllocationRule::CoopSociallyOptimal => "coop_socially_optimal",
        }
    }
}

pub fn allocate(rule: AllocationRule, game: &Game, total_budget: f64) -> Result<BudgetAllocation> {
    match rule {
        AllocationRule::CoopSociallyOptimal => {
            let ops = InfluenceOperators::new(game)?;
            allocate_with(rule, game, &ops, total_budget)
        }
        _ => simple_allocation(rule, game, total_budget),
    }
}

pub fn allocate_with(
    rule: AllocationRule,
    game: &Game,
    ops: &InfluenceOperators,
    total_budget: f64,
) -> Result<BudgetAllocation> {
    if rule != AllocationRule::CoopSociallyOptimal {
        return simple_allocation(rule, game, total_budget);
    }
    check_total(total_budget)?;
    let sol = solve_transferable_with(game, ops, total_budget)?;
    let used = game.partition().group_sq_norms(sol.y.as_vector());
    let sum: f64 = used.iter().sum();
    if sum == 0.0 {
        return BudgetAllocation::new(vec![0.0; used.len()]);
    }
    // The pooled solution is tight; renormalize away the last-ulp drift.
    BudgetAllocation::new(used.iter().map(|u| u * (total_budget / sum)).collect())
}

fn check_total(total_budget: f64) -> Result<()> {
    if !(total_budget.is_finite() && total_budget >= 0.0) {
        return Err(Error::structural(format!(
            "total budget must be finite and >= 0, got {total_budget}"
        )));
    }
    Ok(())
}

fn simple_allocation(
    rule: AllocationRule,
    game: &Game,
    total_budget: f64,
) -> Result<BudgetAllocation> {
    check_total(total_budget)?;
    let sizes = game.partition().sizes();
    let n = game.n() as f64;
    let m = sizes.len() as f64;
    let caps = match rule {
        AllocationRule::Proportional => {
            sizes.iter().map(|&s| total_budget * s as f64 / n).collect()
        }
        AllocationRule::Identical => vec![total_budget / m; sizes.len()],
        AllocationRule::CoopSociallyOptimal => unreachable!("handled by allocate_with"),
    };
    BudgetAllocation::new(caps)
}
