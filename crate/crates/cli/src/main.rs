use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use netinterv::efficiency::{l2_efficiency_with, EfficiencyOptions};
use netinterv::experiment::{
    mean_rows, run_sweep, verify_example, write_csv, write_json, SweepConfig,
};
use netinterv::netgen::{generate_file, preset, NetworkSpec, NetworkType, SignPattern};
use netinterv::planner::{brd_solve_with, BrdOptions, PlannerMode};
use netinterv::{BudgetAllocation, Error, Game, InfluenceOperators};

const EXIT_INPUT: u8 = 1;
const EXIT_NONCONVERGENCE: u8 = 2;
const EXIT_VERIFICATION: u8 = 3;

#[derive(Parser)]
#[command(
    name = "netinterv",
    version,
    about = "Group-planner interventions in linear-quadratic network games"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Coop,
    Noncoop,
}

impl From<Mode> for PlannerMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Coop => PlannerMode::Cooperative,
            Mode::Noncoop => PlannerMode::NonCooperative,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Type1,
    Type2,
    Type3,
}

#[derive(Clone, Copy, ValueEnum)]
enum Sign {
    AllPositive,
    Conflicting,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random network game.
    Gen {
        /// Built-in parameter set.
        #[arg(long, value_enum, conflicts_with = "spec")]
        preset: Option<Preset>,
        #[arg(long, value_enum, default_value = "all-positive")]
        sign: Sign,
        /// JSON network specification instead of a preset.
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Overrides the seed in a spec file.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve the planners' equilibrium for given group budgets.
    Solve {
        #[arg(long)]
        game: PathBuf,
        /// Comma-separated per-group caps.
        #[arg(
            long,
            value_delimiter = ',',
            conflicts_with = "budget_file",
            required_unless_present = "budget_file"
        )]
        budgets: Vec<f64>,
        /// JSON file `{"caps": [...]}`.
        #[arg(long)]
        budget_file: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "noncoop")]
        mode: Mode,
        /// Print the efficiency report (both modes) instead of one solution.
        #[arg(long)]
        efficiency: bool,
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        max_sweeps: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a budget sweep described by a JSON config.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Average rows over seeds.
        #[arg(long)]
        mean: bool,
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        max_sweeps: Option<usize>,
        /// CSV, or JSON when the name ends in `.json`; overrides the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check the two-agent worked example.
    VerifyExample {
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_INPUT)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::NonConvergence { .. } => EXIT_NONCONVERGENCE,
                Error::Verification(_) => EXIT_VERIFICATION,
                _ => EXIT_INPUT,
            })
        }
    }
}

fn output(path: Option<&Path>) -> netinterv::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn brd_options(tol: Option<f64>, max_sweeps: Option<usize>) -> BrdOptions {
    let mut opts = BrdOptions::default();
    if let Some(t) = tol {
        opts.tol = t;
    }
    if let Some(m) = max_sweeps {
        opts.max_sweeps = m;
    }
    opts
}

fn run(cmd: Command) -> netinterv::Result<()> {
    match cmd {
        Command::Gen {
            preset: kind,
            sign,
            spec,
            seed,
            out,
        } => {
            let mut spec: NetworkSpec = match (kind, spec) {
                (_, Some(path)) => serde_json::from_str(&std::fs::read_to_string(path)?)?,
                (Some(kind), None) => {
                    let t = match kind {
                        Preset::Type1 => NetworkType::Type1,
                        Preset::Type2 => NetworkType::Type2,
                        Preset::Type3 => NetworkType::Type3,
                    };
                    let s = match sign {
                        Sign::AllPositive => SignPattern::AllPositive,
                        Sign::Conflicting => SignPattern::Conflicting,
                    };
                    preset(t, s)
                }
                (None, None) => {
                    return Err(Error::Structural("gen needs --preset or --spec".into()))
                }
            };
            if let Some(seed) = seed {
                spec.seed = seed;
            }
            let file = generate_file(&spec)?;
            let mut w = output(out.as_deref())?;
            serde_json::to_writer_pretty(&mut w, &file)?;
            writeln!(w)?;
            w.flush()?;
        }
        Command::Solve {
            game,
            budgets,
            budget_file,
            mode,
            efficiency,
            tol,
            max_sweeps,
            out,
        } => {
            let game = Game::load(game)?;
            let alloc = match budget_file {
                Some(p) => BudgetAllocation::load(p)?,
                None => BudgetAllocation::new(budgets)?,
            };
            let ops = InfluenceOperators::new(&game)?;
            let opts = brd_options(tol, max_sweeps);
            let text = if efficiency {
                let eff = EfficiencyOptions {
                    brd: opts,
                    compute_l1: true,
                };
                l2_efficiency_with(&game, &ops, &alloc, &eff)?.to_json()
            } else {
                brd_solve_with(&game, &ops, &alloc, mode.into(), &opts)?.to_json()
            };
            let mut w = output(out.as_deref())?;
            writeln!(w, "{text}")?;
            w.flush()?;
        }
        Command::Sweep {
            config,
            mean,
            tol,
            max_sweeps,
            out,
        } => {
            let mut cfg = SweepConfig::load(config)?;
            if tol.is_some() {
                cfg.tol = tol;
            }
            if max_sweeps.is_some() {
                cfg.max_sweeps = max_sweeps;
            }
            let mut rows = run_sweep(&cfg)?;
            if mean {
                rows = mean_rows(&cfg, &rows);
            }
            let target = out.or(cfg.output.clone());
            let json = target
                .as_deref()
                .and_then(Path::extension)
                .is_some_and(|e| e == "json");
            let mut w = output(target.as_deref())?;
            if json {
                write_json(&rows, &mut w)?;
            } else {
                write_csv(&rows, &mut w)?;
            }
            w.flush()?;
        }
        Command::VerifyExample { tol } => {
            let report = verify_example(tol)?;
            for c in &report.checks {
                println!("{} {}", if c.pass { "ok  " } else { "FAIL" }, c.name);
            }
            if !report.passed() {
                return Err(Error::Verification(report.diff()));
            }
        }
    }
    Ok(())
}
