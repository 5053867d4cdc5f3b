//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion,
//! followed by indented detail lines, and exits non-zero if any fails.

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use netinterv::efficiency::{
    group_block_spectral_radius, l2_efficiency_with, l2_lower_bound, EfficiencyOptions,
};
use netinterv::experiment::{run_sweep, verify_example, BudgetGrid, SweepConfig};
use netinterv::netgen::{
    allocate_with, generate, preset, AllocationRule, NetworkType, SignPattern,
};
use netinterv::planner::{
    brd_solve_with, direction_similarity, solve_noncoop_via_tilde_with, sphere_max,
    stationarity_direction_similarity, BrdOptions, PlannerMode,
};
use netinterv::{BudgetAllocation, Game, InfluenceOperators};

const TYPES: [NetworkType; 3] = [NetworkType::Type1, NetworkType::Type2, NetworkType::Type3];
const SIGNS: [SignPattern; 2] = [SignPattern::AllPositive, SignPattern::Conflicting];
const MODES: [PlannerMode; 2] = [PlannerMode::NonCooperative, PlannerMode::Cooperative];

struct Outcome {
    pass: bool,
    details: Vec<String>,
}

impl Outcome {
    fn new(pass: bool) -> Self {
        Outcome {
            pass,
            details: vec![],
        }
    }

    fn note(mut self, line: impl Into<String>) -> Self {
        self.details.push(line.into());
        self
    }
}

struct Instance {
    label: String,
    game: Game,
    ops: InfluenceOperators,
    alloc: BudgetAllocation,
}

fn corpus_instance(i: usize, zero_benefits: bool) -> Instance {
    let t = TYPES[i % 3];
    let s = SIGNS[(i / 3) % 2];
    let seed = 1000 + i as u64;
    let rule = AllocationRule::ALL[(i / 6) % 3];
    let mut game = generate(&preset(t, s).with_seed(seed)).unwrap();
    let scale = game.b().norm_squared();
    if zero_benefits {
        game = game.with_benefits(DVector::zeros(game.n())).unwrap();
    }
    let total = scale * 10f64.powi((i % 5) as i32 - 1);
    let ops = InfluenceOperators::new(&game).unwrap();
    let alloc = allocate_with(rule, &game, &ops, total).unwrap();
    Instance {
        label: format!(
            "#{i} {t:?}/{s:?} seed {seed} {} C={total:.4}",
            rule.as_str()
        ),
        game,
        ops,
        alloc,
    }
}

fn corpus(zero_benefits: bool) -> Vec<Instance> {
    (0..200)
        .map(|i| corpus_instance(i, zero_benefits))
        .collect()
}

fn opts() -> BrdOptions {
    BrdOptions::default()
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let game = Game::two_agent_example();
    let ops = InfluenceOperators::new(&game).unwrap();
    let solve = |caps: &[f64]| {
        let alloc = BudgetAllocation::new(caps.to_vec()).unwrap();
        brd_solve_with(&game, &ops, &alloc, PlannerMode::NonCooperative, &opts()).unwrap()
    };
    let before = solve(&[25.0, 0.0]);
    let after = solve(&[16.0, 9.0]);
    let report = verify_example(1e-9).unwrap();
    let elapsed = start.elapsed();

    let close = |a: f64, b: f64| (a - b).abs() <= 1e-9;
    let pre_ok = close(before.x_star[0], 26.0 / 3.0) && close(before.x_star[1], 16.0 / 3.0);
    let post_ok = close(after.x_star[0], 28.0 / 3.0) && close(after.x_star[1], 20.0 / 3.0);
    Outcome::new(pre_ok && post_ok && report.passed() && elapsed < Duration::from_secs(1))
        .note(format!(
            "x* at C=(25,0): ({:.12}, {:.12}), expected (26/3, 16/3)",
            before.x_star[0], before.x_star[1]
        ))
        .note(format!(
            "x* at C=(16,9): ({:.12}, {:.12}), expected (28/3, 20/3)",
            after.x_star[0], after.x_star[1]
        ))
        .note("closed form: (I-G)^-1 (b+y) with b+y = (5,4) is (4/3)(7, 6.5) = (28/3, 26/3)")
        .note(format!(
            "verify-example (checks x2 = 26/3): {}",
            if report.passed() { "pass" } else { "fail" }
        ))
        .note(format!("runtime {elapsed:?}"))
}

fn criterion_2(instances: &[Instance]) -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut worst_at = String::new();
    for inst in instances {
        for mode in MODES {
            let sol = brd_solve_with(&inst.game, &inst.ops, &inst.alloc, mode, &opts()).unwrap();
            let used = inst.game.partition().group_sq_norms(sol.y_star.as_vector());
            for (u, c) in used.iter().zip(inst.alloc.caps()) {
                let rel = (u - c).abs() / c.max(f64::MIN_POSITIVE);
                let rel = if *c == 0.0 { *u } else { rel };
                if rel > worst {
                    worst = rel;
                    worst_at = format!("{} {}", inst.label, mode.as_str());
                }
            }
        }
    }
    let elapsed = start.elapsed();
    Outcome::new(worst <= 1e-6 && elapsed < Duration::from_secs(120))
        .note(format!("max relative slack {worst:.3e} ({worst_at})"))
        .note(format!(
            "{} instances x 2 modes in {elapsed:?}",
            instances.len()
        ))
}

fn criterion_3(instances: &[Instance]) -> Outcome {
    let mut worst: f64 = 0.0;
    for inst in instances {
        let direct = brd_solve_with(
            &inst.game,
            &inst.ops,
            &inst.alloc,
            PlannerMode::NonCooperative,
            &opts(),
        )
        .unwrap();
        let tilde =
            solve_noncoop_via_tilde_with(&inst.game, &inst.ops, &inst.alloc, &opts()).unwrap();
        worst = worst.max((direct.y_star.0 - tilde.y_star.0).amax());
    }
    Outcome::new(worst <= 1e-6).note(format!("max sup-norm difference {worst:.3e}"))
}

fn gap(game: &Game, ops: &InfluenceOperators, rule: AllocationRule, total: f64) -> (f64, bool) {
    let alloc = allocate_with(rule, game, ops, total).unwrap();
    let eff = EfficiencyOptions {
        brd: opts(),
        compute_l1: false,
    };
    let r = l2_efficiency_with(game, ops, &alloc, &eff).unwrap();
    (r.bound_gap.unwrap(), r.bound_applicable)
}

fn criterion_4() -> Outcome {
    let budgets = [1.0, 10.0, 100.0];
    let mut pass = true;
    let mut details = Vec::new();
    let mut max_spread: f64 = 0.0;
    let mut by_sign: Vec<Vec<f64>> = vec![vec![]; 2];
    for t in TYPES {
        for s in SIGNS {
            let (lo, hi) = if t == NetworkType::Type1 && s == SignPattern::Conflicting {
                (0.02, 0.15)
            } else {
                (0.0, 0.01)
            };
            let mut gmin = f64::INFINITY;
            let mut gmax = f64::NEG_INFINITY;
            for seed in 0..20 {
                let game = generate(&preset(t, s).with_seed(seed)).unwrap();
                let game = game.with_benefits(DVector::zeros(game.n())).unwrap();
                let ops = InfluenceOperators::new(&game).unwrap();
                for rule in AllocationRule::ALL {
                    let gaps: Vec<f64> = budgets
                        .iter()
                        .map(|&c| {
                            let (g, applicable) = gap(&game, &ops, rule, c);
                            assert!(applicable);
                            g
                        })
                        .collect();
                    let spread = gaps.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
                        - gaps.iter().cloned().fold(f64::INFINITY, f64::min);
                    max_spread = max_spread.max(spread);
                    by_sign[(s == SignPattern::Conflicting) as usize].extend(&gaps);
                    for g in gaps {
                        gmin = gmin.min(g);
                        gmax = gmax.max(g);
                    }
                }
            }
            // Zero gaps may come out at -1e-16; same slack as the bound-validity invariant.
            let ok = gmin >= lo - 1e-9 && gmax <= hi;
            pass &= ok;
            details.push(format!(
                "{t:?}/{s:?}: gap in [{gmin:.3e}, {gmax:.3e}], required [{lo}, {hi}] {}",
                if ok { "ok" } else { "OUT OF BAND" }
            ));
        }
    }
    pass &= max_spread < 0.01;
    let sign_diff = by_sign[0]
        .iter()
        .zip(&by_sign[1])
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    details.push(format!(
        "max |gap(all_positive) - gap(conflicting)| on the same draws: {sign_diff:.3e} \
         (with b = 0 the sign flip is the similarity DGD, D = diag(+-1 per group))"
    ));
    details.push(format!(
        "max gap spread over C in {budgets:?}: {max_spread:.3e} (required < 0.01)"
    ));
    Outcome { pass, details }
}

fn criterion_5(instances: &[Instance]) -> Outcome {
    let mut worst: f64 = 0.0;
    for inst in instances {
        let coop = brd_solve_with(
            &inst.game,
            &inst.ops,
            &inst.alloc,
            PlannerMode::Cooperative,
            &opts(),
        )
        .unwrap();
        let w = inst
            .ops
            .social_welfare(inst.game.b(), coop.y_star.as_vector());
        let m = inst.game.num_groups();
        let rho: Vec<f64> = (0..m)
            .map(|k| group_block_spectral_radius(&inst.ops, inst.game.partition(), k).unwrap())
            .collect();
        let identity = match l2_lower_bound(
            &coop.shadow_prices,
            &coop.shadow_prices,
            &rho,
            inst.alloc.caps(),
        ) {
            Ok(b) => b.coop_welfare_identity,
            Err(_) => 0.0,
        };
        let rel = (w - identity).abs() / w.abs().max(f64::MIN_POSITIVE);
        let rel = if w == 0.0 && identity == 0.0 {
            0.0
        } else {
            rel
        };
        worst = worst.max(rel);
    }
    Outcome::new(worst <= 1e-6).note(format!("max |W - sum lambda_bar C| / W = {worst:.3e}"))
}

fn criterion_6(instances: &[Instance]) -> Outcome {
    let mut worst = f64::INFINITY;
    let mut worst_at = String::new();
    let mut stationarity = f64::INFINITY;
    for inst in instances {
        let sol = brd_solve_with(
            &inst.game,
            &inst.ops,
            &inst.alloc,
            PlannerMode::NonCooperative,
            &opts(),
        )
        .unwrap();
        let rho = direction_similarity(&inst.game, &inst.ops, &sol).unwrap();
        if rho < worst {
            worst = rho;
            worst_at = inst.label.clone();
        }
        stationarity = stationarity
            .min(stationarity_direction_similarity(&inst.game, &inst.ops, &sol).unwrap());
    }
    Outcome::new(worst >= 1.0 - 1e-6)
        .note(format!("min rho(y*, v_max(B~)) = {worst:.9} ({worst_at})"))
        .note(format!(
            "min rho(y*, D^1/2 u_max(D^1/2 A~ D^1/2)) = {stationarity:.12} (stationarity-based direction)"
        ))
}

fn random_orthogonal(rng: &mut ChaCha8Rng, d: usize) -> DMatrix<f64> {
    let m = DMatrix::from_fn(d, d, |_, _| rng.gen_range(-1.0..1.0));
    m.qr().q()
}

/// Projected gradient ascent on the sphere `‖z‖² = r²` with step `1/λ_max(M)`,
/// restarted from random points; best objective found.
fn ascent_oracle(rng: &mut ChaCha8Rng, m: &DMatrix<f64>, q: &DVector<f64>, r2: f64) -> f64 {
    let d = q.len();
    let r = r2.sqrt();
    let top = m.clone().symmetric_eigen().eigenvalues.max().max(1e-3);
    let step = 1.0 / top;
    let obj = |z: &DVector<f64>| 0.5 * z.dot(&(m * z)) + q.dot(z);
    let mut best = f64::NEG_INFINITY;
    for _ in 0..8 {
        let mut z = DVector::from_fn(d, |_, _| rng.gen_range(-1.0..1.0));
        z *= r / z.norm();
        for _ in 0..200_000 {
            let g = &z + step * (m * &z + q);
            let next = &g * (r / g.norm());
            let moved = (&next - &z).amax();
            z = next;
            if moved < 1e-15 * (1.0 + r) {
                break;
            }
        }
        best = best.max(obj(&z));
    }
    best
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut worst: f64 = 0.0;
    let mut hard_cases = 0;
    for i in 0..100 {
        let hard = i < 10;
        let d = rng.gen_range(if hard { 2 } else { 1 }..=6);
        let r2: f64 = rng.gen_range(0.1..10.0);
        let v = random_orthogonal(&mut rng, d);
        let mut mu: Vec<f64> = (0..d).map(|_| rng.gen_range(0.0..3.0)).collect();
        mu.sort_by(|a, b| b.partial_cmp(a).unwrap());
        if hard {
            mu[0] = mu[1] + rng.gen_range(0.5..1.5);
        }
        let m = &v * DMatrix::from_diagonal(&DVector::from_vec(mu.clone())) * v.transpose();
        let m = (&m + m.transpose()) * 0.5;
        let q = if hard {
            // Orthogonal to the top eigenvector and small enough that the
            // interior point at 2λ = μ_max stays inside the ball.
            let mut coeffs: DVector<f64> = DVector::from_fn(d, |_, _| rng.gen_range(-1.0..1.0));
            coeffs[0] = 0.0;
            let gap = mu[0] - mu[1];
            coeffs *= 0.5 * gap * r2.sqrt() / coeffs.norm().max(1e-12);
            &v * coeffs
        } else {
            DVector::from_fn(d, |_, _| rng.gen_range(-2.0..2.0))
        };
        let res = sphere_max(&m, &q, r2).unwrap();
        if hard && res.hard_case {
            hard_cases += 1;
        }
        let ours = 0.5 * res.z.dot(&(&m * &res.z)) + q.dot(&res.z);
        let oracle = ascent_oracle(&mut rng, &m, &q, r2);
        let rel = (ours - oracle).abs() / oracle.abs().max(1e-12);
        worst = worst.max(rel);
    }
    Outcome::new(worst <= 1e-8 && hard_cases == 10)
        .note(format!("max relative objective difference {worst:.3e}"))
        .note(format!("constructed hard cases detected: {hard_cases}/10"))
}

fn rel_err(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(88);
    let h = 1e-5;
    let mut worst_w: f64 = 0.0;
    let mut worst_wk: f64 = 0.0;
    let mut worst_wk_at = String::new();
    let mut worst_exact: f64 = 0.0;
    for i in 0..20 {
        let inst = corpus_instance(i, false);
        let (game, ops) = (&inst.game, &inst.ops);
        let p = game.partition();
        let b = game.b();
        for _ in 0..20 {
            let y = DVector::from_fn(game.n(), |_, _| rng.gen_range(-1.0..1.0));
            let fd = |f: &dyn Fn(&DVector<f64>) -> f64, idx: &[usize]| {
                DVector::from_iterator(
                    idx.len(),
                    idx.iter().map(|&j| {
                        let mut up = y.clone();
                        let mut dn = y.clone();
                        up[j] += h;
                        dn[j] -= h;
                        (f(&up) - f(&dn)) / (2.0 * h)
                    }),
                )
            };
            let all: Vec<usize> = (0..game.n()).collect();
            let fd_w = fd(&|v| ops.social_welfare(b, v), &all);
            worst_w = worst_w.max(rel_err(&ops.welfare_gradient(b, &y), &fd_w));
            for k in 0..p.num_groups() {
                let fd_wk = fd(&|v| ops.group_welfare(p, b, v, k), p.members(k));
                let e = rel_err(&ops.group_planner_gradient(p, b, &y, k), &fd_wk);
                if e > worst_wk {
                    worst_wk = e;
                    worst_wk_at = inst.label.clone();
                }
                worst_exact = worst_exact.max(rel_err(
                    &ops.group_welfare_gradient_exact(p, b, &y, k, k),
                    &fd_wk,
                ));
            }
        }
    }
    Outcome::new(worst_w <= 1e-4 && worst_wk <= 1e-4)
        .note(format!("grad W = A(y+b): max relative error {worst_w:.3e}"))
        .note(format!(
            "grad W_k = A_kk(y_k+b_k) + 1/2 sum A_kl(y_l+b_l): max relative error {worst_wk:.3e} ({worst_wk_at})"
        ))
        .note(format!("grad W_k = (A^1/2)_kk x*_k: max relative error {worst_exact:.3e}"))
}

fn criterion_9() -> Outcome {
    let mut cfg = SweepConfig::new(
        NetworkType::Type2,
        SignPattern::Conflicting,
        (1..=5).collect(),
    );
    cfg.compute_l1 = false;
    cfg.budgets = BudgetGrid::default();
    let rows = run_sweep(&cfg).unwrap();
    let errors = rows.iter().filter(|r| r.error.is_some()).count();
    let min_e = rows
        .iter()
        .filter_map(|r| r.e_l2)
        .fold(f64::INFINITY, f64::min);
    let dip = min_e < 0.9 && errors == 0;

    let mut linear_worst: f64 = 0.0;
    let mut flat_worst: f64 = 0.0;
    let mut flat_at = String::new();
    for t in TYPES {
        for s in SIGNS {
            for seed in 0..3 {
                let game = generate(&preset(t, s).with_seed(seed)).unwrap();
                let ops = InfluenceOperators::new(&game).unwrap();
                let zero = game.with_benefits(DVector::zeros(game.n())).unwrap();
                let base = game.b().norm_squared();
                for rule in AllocationRule::ALL {
                    for mode in MODES {
                        let welfare = |c: f64| {
                            let alloc = allocate_with(rule, &zero, &ops, c).unwrap();
                            let sol = brd_solve_with(&zero, &ops, &alloc, mode, &opts()).unwrap();
                            ops.social_welfare(zero.b(), sol.y_star.as_vector())
                        };
                        let w1 = welfare(base);
                        for alpha in [2.0, 10.0, 100.0] {
                            linear_worst = linear_worst
                                .max((welfare(alpha * base) - alpha * w1).abs() / (alpha * w1));
                        }
                    }
                    let eff = EfficiencyOptions {
                        brd: opts(),
                        compute_l1: false,
                    };
                    let e_at = |c: f64| {
                        let alloc = allocate_with(rule, &game, &ops, c).unwrap();
                        l2_efficiency_with(&game, &ops, &alloc, &eff).unwrap().e_l2
                    };
                    let (e100, e10k) = (e_at(100.0 * base), e_at(10_000.0 * base));
                    if (e100 - e10k).abs() > flat_worst {
                        flat_worst = (e100 - e10k).abs();
                        flat_at = format!(
                            "{t:?}/{s:?} seed {seed} {}: {e100:.5} vs {e10k:.5}",
                            rule.as_str()
                        );
                    }
                }
            }
        }
    }
    Outcome::new(dip && linear_worst <= 1e-9 && flat_worst < 1e-3)
        .note(format!("Type2/Conflicting min e_l2 over sweep = {min_e:.4} (required < 0.9), failed cells {errors}"))
        .note(format!("b=0 welfare linearity: max relative deviation {linear_worst:.3e}"))
        .note(format!("|e_l2(100C) - e_l2(10000C)| max = {flat_worst:.3e} (required < 1e-3), C = sum ||b_k||^2, worst {flat_at}"))
}

fn main() {
    let total = Instant::now();
    let with_b = corpus(false);
    let without_b = corpus(true);

    let results: Vec<(&str, Outcome)> = vec![
        ("1 worked-example exactness", criterion_1()),
        ("2 group budgets bind", criterion_2(&with_b)),
        (
            "3 A~ route equals direct non-cooperative solve",
            criterion_3(&with_b),
        ),
        ("4 lower bound and tightness gaps", criterion_4()),
        (
            "5 cooperative welfare equals shadow-price sum",
            criterion_5(&without_b),
        ),
        (
            "6 direction of the non-cooperative profile",
            criterion_6(&without_b),
        ),
        ("7 sphere maximizer against ascent oracle", criterion_7()),
        (
            "8 analytic gradients against finite differences",
            criterion_8(),
        ),
        ("9 qualitative sweep behaviour", criterion_9()),
    ];

    let mut failed = 0;
    for (name, outcome) in &results {
        println!(
            "{} criterion {name}",
            if outcome.pass { "PASS" } else { "FAIL" }
        );
        for d in &outcome.details {
            println!("      {d}");
        }
        if !outcome.pass {
            failed += 1;
        }
    }
    println!(
        "{} of {} criteria passed in {:?}",
        results.len() - failed,
        results.len(),
        total.elapsed()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
