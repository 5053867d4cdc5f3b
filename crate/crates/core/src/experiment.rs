//! Budget sweeps over generated networks and the two-agent worked example.

use std::io::Write;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::efficiency::{report_from_solutions, transfer_incentive, TransferForm};
use crate::equilibrium::InfluenceOperators;
use crate::error::{Error, Result};
use crate::game::{BudgetAllocation, Game};
use crate::netgen::{allocate_with, generate, preset, AllocationRule, NetworkType, SignPattern};
use crate::planner::{brd_solve_with, direction_similarity, BrdOptions, PlannerMode};

pub const CSV_HEADER: [&str; 11] = [
    "seed",
    "C",
    "rule",
    "w_noncoop",
    "w_coop",
    "e_l2",
    "l2_lower_bound",
    "bound_gap",
    "e_l1",
    "iterations",
    "error",
];

/// Total budgets to sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BudgetGrid {
    /// Absolute totals `C`.
    Explicit(Vec<f64>),
    /// `points` geometrically spaced multiples in `[low, high]` of
    /// `Σ_k ‖b_{S_k}‖²` of each generated game (of 1 when `b = 0`).
    Relative { low: f64, high: f64, points: usize },
}

impl Default for BudgetGrid {
    fn default() -> Self {
        BudgetGrid::Relative {
            low: 0.1,
            high: 1000.0,
            points: 25,
        }
    }
}

impl BudgetGrid {
    pub fn len(&self) -> usize {
        match self {
            BudgetGrid::Explicit(v) => v.len(),
            BudgetGrid::Relative { points, .. } => *points,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn totals(&self, game: &Game) -> Vec<f64> {
        match self {
            BudgetGrid::Explicit(v) => v.clone(),
            BudgetGrid::Relative { low, high, points } => {
                let b2 = game.b().norm_squared();
                let scale = if b2 > 0.0 { b2 } else { 1.0 };
                geometric(*low, *high, *points)
                    .into_iter()
                    .map(|f| f * scale)
                    .collect()
            }
        }
    }

    fn validate(&self) -> Result<()> {
        if self.is_empty() {
            return Err(Error::structural("budget grid is empty"));
        }
        match self {
            BudgetGrid::Explicit(v) => {
                if let Some(c) = v.iter().find(|c| !(c.is_finite() && **c >= 0.0)) {
                    return Err(Error::structural(format!(
                        "budgets must be finite and >= 0, got {c}"
                    )));
                }
            }
            BudgetGrid::Relative { low, high, .. } => {
                if !(*low > 0.0 && low <= high && high.is_finite()) {
                    return Err(Error::structural(format!(
                        "relative grid needs 0 < low <= high, got [{low}, {high}]"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// `points` values spaced evenly in log scale from `low` to `high`.
pub fn geometric(low: f64, high: f64, points: usize) -> Vec<f64> {
    match points {
        0 => vec![],
        1 => vec![low],
        _ => {
            let (a, b) = (low.ln(), high.ln());
            (0..points)
                .map(|i| (a + (b - a) * i as f64 / (points - 1) as f64).exp())
                .collect()
        }
    }
}

fn default_rules() -> Vec<AllocationRule> {
    AllocationRule::ALL.to_vec()
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub network_type: NetworkType,
    pub sign_pattern: SignPattern,
    #[serde(default = "default_rules")]
    pub allocation_rules: Vec<AllocationRule>,
    #[serde(default)]
    pub budgets: BudgetGrid,
    pub seeds: Vec<u64>,
    #[serde(default = "default_true")]
    pub compute_l1: bool,
    #[serde(default = "default_true")]
    pub bound: bool,
    /// Direction similarity of the non-cooperative profile; reported in the
    /// JSON rows only.
    #[serde(default)]
    pub direction: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group_sizes: Option<Vec<usize>>,
    /// Override of the benefit range `[low, high]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b_range: Option<(f64, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_sweeps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

impl SweepConfig {
    pub fn new(network_type: NetworkType, sign_pattern: SignPattern, seeds: Vec<u64>) -> Self {
        SweepConfig {
            network_type,
            sign_pattern,
            allocation_rules: default_rules(),
            budgets: BudgetGrid::default(),
            seeds,
            compute_l1: true,
            bound: true,
            direction: false,
            group_sizes: None,
            b_range: None,
            tol: None,
            max_sweeps: None,
            output: None,
        }
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let cfg: SweepConfig = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::structural("no seeds given"));
        }
        if self.allocation_rules.is_empty() {
            return Err(Error::structural("no allocation rules given"));
        }
        self.budgets.validate()?;
        self.brd_options().validate()?;
        self.network(0).validate()
    }

    pub fn brd_options(&self) -> BrdOptions {
        let mut opts = BrdOptions::default();
        if let Some(t) = self.tol {
            opts.tol = t;
        }
        if let Some(m) = self.max_sweeps {
            opts.max_sweeps = m;
        }
        opts
    }

    fn network(&self, seed: u64) -> crate::netgen::NetworkSpec {
        let mut spec = preset(self.network_type, self.sign_pattern).with_seed(seed);
        if let Some(sizes) = &self.group_sizes {
            spec = spec.with_group_sizes(sizes.clone());
        }
        if let Some((lo, hi)) = self.b_range {
            spec = spec.with_benefits(lo, hi);
        }
        spec
    }
}

/// One `(seed, C, rule)` cell of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub seed: String,
    #[serde(rename = "C")]
    pub total_budget: f64,
    pub rule: AllocationRule,
    pub w_noncoop: Option<f64>,
    pub w_coop: Option<f64>,
    pub e_l2: Option<f64>,
    pub l2_lower_bound: Option<f64>,
    pub bound_gap: Option<f64>,
    pub e_l1: Option<f64>,
    /// Sweeps of the non-cooperative dynamics.
    pub iterations: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub direction: Option<f64>,
    pub error: Option<String>,
}

impl SweepRow {
    fn failed(seed: u64, total_budget: f64, rule: AllocationRule, err: &Error) -> Self {
        SweepRow {
            seed: seed.to_string(),
            total_budget,
            rule,
            w_noncoop: None,
            w_coop: None,
            e_l2: None,
            l2_lower_bound: None,
            bound_gap: None,
            e_l1: None,
            iterations: None,
            direction: None,
            error: Some(err.to_string()),
        }
    }

    pub fn csv_record(&self) -> Vec<String> {
        let f = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        vec![
            self.seed.clone(),
            self.total_budget.to_string(),
            self.rule.as_str().to_string(),
            f(self.w_noncoop),
            f(self.w_coop),
            f(self.e_l2),
            f(self.l2_lower_bound),
            f(self.bound_gap),
            f(self.e_l1),
            f(self.iterations),
            self.error.clone().unwrap_or_default(),
        ]
    }
}

fn evaluate_cell(
    cfg: &SweepConfig,
    game: &Game,
    ops: &InfluenceOperators,
    seed: u64,
    total: f64,
    rule: AllocationRule,
) -> Result<SweepRow> {
    let opts = cfg.brd_options();
    let alloc = allocate_with(rule, game, ops, total)?;
    let noncoop = brd_solve_with(game, ops, &alloc, PlannerMode::NonCooperative, &opts)?;
    let coop = brd_solve_with(game, ops, &alloc, PlannerMode::Cooperative, &opts)?;
    let report = report_from_solutions(game, ops, &alloc, &noncoop, &coop, cfg.compute_l1)?;
    let show_bound = cfg.bound && report.bound_applicable;
    let direction = if cfg.direction {
        direction_similarity(game, ops, &noncoop).ok()
    } else {
        None
    };
    Ok(SweepRow {
        seed: seed.to_string(),
        total_budget: total,
        rule,
        w_noncoop: Some(report.w_noncoop),
        w_coop: Some(report.w_coop),
        e_l2: Some(report.e_l2),
        l2_lower_bound: report.l2_lower_bound.filter(|_| show_bound),
        bound_gap: report.bound_gap.filter(|_| show_bound),
        e_l1: report.e_l1_at_ybar,
        iterations: Some(noncoop.iterations as f64),
        direction,
        error: None,
    })
}

/// Run every `(seed, C, rule)` cell; rows come back in that order. Failures
/// are recorded per row.
pub fn run_sweep(cfg: &SweepConfig) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    let per_seed: Vec<Vec<SweepRow>> = cfg
        .seeds
        .par_iter()
        .map(|&seed| {
            let setup = generate(&cfg.network(seed))
                .and_then(|g| InfluenceOperators::new(&g).map(|ops| (g, ops)));
            let totals = match &setup {
                Ok((game, _)) => cfg.budgets.totals(game),
                Err(_) => vec![f64::NAN; cfg.budgets.len()],
            };
            let cells: Vec<(f64, AllocationRule)> = totals
                .iter()
                .flat_map(|&c| cfg.allocation_rules.iter().map(move |&r| (c, r)))
                .collect();
            cells
                .into_par_iter()
                .map(|(total, rule)| match &setup {
                    Ok((game, ops)) => evaluate_cell(cfg, game, ops, seed, total, rule)
                        .unwrap_or_else(|e| SweepRow::failed(seed, total, rule, &e)),
                    Err(e) => SweepRow::failed(seed, total, rule, e),
                })
                .collect()
        })
        .collect();
    Ok(per_seed.into_iter().flatten().collect())
}

/// Average successful rows over seeds, per `(budget index, rule)`.
pub fn mean_rows(cfg: &SweepConfig, rows: &[SweepRow]) -> Vec<SweepRow> {
    let per_seed = cfg.budgets.len() * cfg.allocation_rules.len();
    if per_seed == 0 {
        return vec![];
    }
    (0..per_seed)
        .map(|cell| {
            let group: Vec<&SweepRow> = rows.iter().skip(cell).step_by(per_seed).collect();
            let ok: Vec<&SweepRow> = group
                .iter()
                .copied()
                .filter(|r| r.error.is_none())
                .collect();
            let mean = |f: &dyn Fn(&SweepRow) -> Option<f64>| {
                let vals: Vec<f64> = ok.iter().filter_map(|r| f(r)).collect();
                (!vals.is_empty() && vals.len() == ok.len())
                    .then(|| vals.iter().sum::<f64>() / vals.len() as f64)
            };
            let failures = group.len() - ok.len();
            SweepRow {
                seed: "mean".into(),
                total_budget: group.iter().map(|r| r.total_budget).sum::<f64>()
                    / group.len() as f64,
                rule: group[0].rule,
                w_noncoop: mean(&|r| r.w_noncoop),
                w_coop: mean(&|r| r.w_coop),
                e_l2: mean(&|r| r.e_l2),
                l2_lower_bound: mean(&|r| r.l2_lower_bound),
                bound_gap: mean(&|r| r.bound_gap),
                e_l1: mean(&|r| r.e_l1),
                iterations: mean(&|r| r.iterations),
                direction: mean(&|r| r.direction),
                error: (failures > 0)
                    .then(|| format!("{failures} of {} seeds failed", group.len())),
            }
        })
        .collect()
}

pub fn write_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for row in rows {
        w.write_record(row.csv_record())?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<W: Write>(rows: &[SweepRow], mut out: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, rows)?;
    writeln!(out)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub expected: f64,
    pub actual: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExampleReport {
    pub checks: Vec<Check>,
}

impl ExampleReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    /// One line per failing check.
    pub fn diff(&self) -> String {
        self.checks
            .iter()
            .filter(|c| !c.pass)
            .map(|c| format!("{}: expected {}, got {}", c.name, c.expected, c.actual))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

/// Two agents in singleton groups, `g = ½`, `b = (1, 1)`. Planner 1 holds
/// all of `C = 25`; moving 9 units to planner 2 raises both actions.
pub fn verify_example(tol: f64) -> Result<ExampleReport> {
    let game = Game::two_agent_example();
    let ops = InfluenceOperators::new(&game)?;
    let opts = BrdOptions::default();
    let before_alloc = BudgetAllocation::new(vec![25.0, 0.0])?;
    let after_alloc = BudgetAllocation::new(vec![16.0, 9.0])?;
    let before = brd_solve_with(
        &game,
        &ops,
        &before_alloc,
        PlannerMode::NonCooperative,
        &opts,
    )?;
    let after = brd_solve_with(
        &game,
        &ops,
        &after_alloc,
        PlannerMode::NonCooperative,
        &opts,
    )?;
    let incentive = transfer_incentive(
        &game,
        &ops,
        &before_alloc,
        &before,
        0,
        1,
        TransferForm::default(),
    )?;

    let mut checks = Vec::new();
    let mut close = |name: &str, expected: f64, actual: f64| {
        checks.push(Check {
            name: name.to_string(),
            expected,
            actual,
            pass: (expected - actual).abs() <= tol,
        })
    };
    close("x1 at C=(25,0)", 26.0 / 3.0, before.x_star[0]);
    close("x2 at C=(25,0)", 16.0 / 3.0, before.x_star[1]);
    close("x1 at C=(16,9)", 28.0 / 3.0, after.x_star[0]);
    close("x2 at C=(16,9)", 26.0 / 3.0, after.x_star[1]);

    let flag = |name: &str, ok: bool, actual: f64| Check {
        name: name.to_string(),
        expected: 1.0,
        actual,
        pass: ok,
    };
    checks.push(flag(
        "planner 1 gains from transferring to planner 2",
        incentive.incentive,
        incentive.lhs - incentive.rhs,
    ));
    for k in 0..2 {
        let w0 = ops.group_welfare(game.partition(), game.b(), before.y_star.as_vector(), k);
        let w1 = ops.group_welfare(game.partition(), game.b(), after.y_star.as_vector(), k);
        checks.push(flag(
            &format!("group {} welfare improves", k + 1),
            w1 > w0,
            w1 - w0,
        ));
    }
    Ok(ExampleReport { checks })
}
