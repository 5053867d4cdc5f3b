//! Game data model: interaction matrix, standalone benefits, community
//! partition, per-group budgets and intervention profiles.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::SymEigen;

/// Relative slack allowed on a group budget when testing feasibility.
pub const FEASIBILITY_TOL: f64 = 1e-9;

/// Disjoint, nonempty groups covering `0..n`. Indices inside a group are
/// kept ascending; groups keep their declared order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    groups: Vec<Vec<usize>>,
    group_of: Vec<usize>,
}

impl Partition {
    pub fn new(groups: Vec<Vec<usize>>, n: usize) -> Result<Self> {
        if groups.is_empty() {
            return Err(Error::structural("partition needs at least one group"));
        }
        let mut group_of = vec![usize::MAX; n];
        let mut sorted = Vec::with_capacity(groups.len());
        for (k, mut members) in groups.into_iter().enumerate() {
            if members.is_empty() {
                return Err(Error::structural(format!("group {k} is empty")));
            }
            members.sort_unstable();
            for &i in &members {
                if i >= n {
                    return Err(Error::structural(format!(
                        "group {k} references agent {i} but n = {n}"
                    )));
                }
                if group_of[i] != usize::MAX {
                    return Err(Error::structural(format!(
                        "agent {i} appears in more than one group (or twice)"
                    )));
                }
                group_of[i] = k;
            }
            sorted.push(members);
        }
        if let Some(i) = group_of.iter().position(|&k| k == usize::MAX) {
            return Err(Error::structural(format!("agent {i} is not in any group")));
        }
        Ok(Partition {
            groups: sorted,
            group_of,
        })
    }

    /// Consecutive blocks of the given sizes.
    pub fn contiguous(sizes: &[usize]) -> Result<Self> {
        let mut start = 0;
        let mut groups = Vec::with_capacity(sizes.len());
        for &s in sizes {
            groups.push((start..start + s).collect());
            start += s;
        }
        Partition::new(groups, start)
    }

    pub fn num_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn num_agents(&self) -> usize {
        self.group_of.len()
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn members(&self, k: usize) -> &[usize] {
        &self.groups[k]
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.groups.iter().map(Vec::len).collect()
    }

    pub fn group_of(&self, agent: usize) -> usize {
        self.group_of[agent]
    }

    fn check_group(&self, k: usize) -> Result<()> {
        if k >= self.num_groups() {
            return Err(Error::structural(format!(
                "group index {k} out of range (M = {})",
                self.num_groups()
            )));
        }
        Ok(())
    }

    /// Entries of `v` at the members of group `k`.
    pub fn gather(&self, v: &DVector<f64>, k: usize) -> Result<DVector<f64>> {
        self.check_group(k)?;
        self.check_len(v.len())?;
        Ok(self.gather_unchecked(v, k))
    }

    pub(crate) fn gather_unchecked(&self, v: &DVector<f64>, k: usize) -> DVector<f64> {
        DVector::from_iterator(self.groups[k].len(), self.groups[k].iter().map(|&i| v[i]))
    }

    /// Write `values` into `v` at the members of group `k`.
    pub fn scatter(&self, v: &mut DVector<f64>, k: usize, values: &DVector<f64>) -> Result<()> {
        self.check_group(k)?;
        self.check_len(v.len())?;
        if values.len() != self.groups[k].len() {
            return Err(Error::structural(format!(
                "group {k} has {} members but {} values were given",
                self.groups[k].len(),
                values.len()
            )));
        }
        self.scatter_unchecked(v, k, values);
        Ok(())
    }

    pub(crate) fn scatter_unchecked(&self, v: &mut DVector<f64>, k: usize, values: &DVector<f64>) {
        for (&i, &x) in self.groups[k].iter().zip(values.iter()) {
            v[i] = x;
        }
    }

    /// Block `M[S_k, S_l]`.
    pub fn matrix_block(&self, m: &DMatrix<f64>, k: usize, l: usize) -> Result<DMatrix<f64>> {
        self.check_group(k)?;
        self.check_group(l)?;
        if m.nrows() != self.num_agents() || m.ncols() != self.num_agents() {
            return Err(Error::structural(format!(
                "matrix is {}x{}, partition covers {} agents",
                m.nrows(),
                m.ncols(),
                self.num_agents()
            )));
        }
        Ok(self.block_unchecked(m, k, l))
    }

    pub(crate) fn block_unchecked(&self, m: &DMatrix<f64>, k: usize, l: usize) -> DMatrix<f64> {
        let rows = &self.groups[k];
        let cols = &self.groups[l];
        DMatrix::from_fn(rows.len(), cols.len(), |r, c| m[(rows[r], cols[c])])
    }

    /// Squared norm of each group's slice of `v`.
    pub fn group_sq_norms(&self, v: &DVector<f64>) -> Vec<f64> {
        self.groups
            .iter()
            .map(|members| members.iter().map(|&i| v[i] * v[i]).sum())
            .collect()
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.num_agents() {
            return Err(Error::structural(format!(
                "vector has length {len}, partition covers {} agents",
                self.num_agents()
            )));
        }
        Ok(())
    }
}

/// Network game `u_i = (b_i + y_i) x_i − ½x_i² + x_i Σ_j g_ij x_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct Game {
    g: DMatrix<f64>,
    b: DVector<f64>,
    partition: Partition,
}

impl Game {
    /// Checks shapes only; use [`validate_game`] for the spectral conditions.
    pub fn new(g: DMatrix<f64>, b: DVector<f64>, partition: Partition) -> Result<Self> {
        if !g.is_square() {
            return Err(Error::structural(format!(
                "interaction matrix is {}x{}, expected square",
                g.nrows(),
                g.ncols()
            )));
        }
        let n = g.nrows();
        if n == 0 {
            return Err(Error::structural("game has no agents"));
        }
        if b.len() != n {
            return Err(Error::structural(format!(
                "benefit vector has length {}, expected {n}",
                b.len()
            )));
        }
        if partition.num_agents() != n {
            return Err(Error::structural(format!(
                "partition covers {} agents, expected {n}",
                partition.num_agents()
            )));
        }
        if g.iter().chain(b.iter()).any(|x| !x.is_finite()) {
            return Err(Error::structural("game data contains non-finite values"));
        }
        Ok(Game { g, b, partition })
    }

    pub fn n(&self) -> usize {
        self.g.nrows()
    }

    pub fn g(&self) -> &DMatrix<f64> {
        &self.g
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn num_groups(&self) -> usize {
        self.partition.num_groups()
    }

    /// Same network and partition with a different benefit vector.
    pub fn with_benefits(&self, b: DVector<f64>) -> Result<Self> {
        Game::new(self.g.clone(), b, self.partition.clone())
    }

    pub fn is_symmetric(&self) -> bool {
        let n = self.n();
        (0..n).all(|i| (0..i).all(|j| self.g[(i, j)] == self.g[(j, i)]))
    }

    pub fn has_zero_diagonal(&self) -> bool {
        self.g.diagonal().iter().all(|&d| d == 0.0)
    }

    /// Largest eigenvalue of the symmetric part of `G`.
    pub fn lambda_max(&self) -> Result<f64> {
        Ok(SymEigen::new(&self.g)?.max())
    }

    pub(crate) fn require_lambda_max_below(&self, limit: f64, what: &str) -> Result<f64> {
        if !self.is_symmetric() {
            return Err(Error::precondition(format!("{what}: G must be symmetric")));
        }
        let lmax = self.lambda_max()?;
        if lmax >= limit {
            return Err(Error::precondition(format!(
                "{what} requires lambda_max(G) < {limit}, got {lmax}"
            )));
        }
        Ok(lmax)
    }

    /// Two singleton groups, `g_12 = g_21 = ½`, `b = (1, 1)`.
    pub fn two_agent_example() -> Game {
        let g = DMatrix::from_row_slice(2, 2, &[0.0, 0.5, 0.5, 0.0]);
        let b = DVector::from_vec(vec![1.0, 1.0]);
        let partition = Partition::new(vec![vec![0], vec![1]], 2).expect("static partition");
        Game::new(g, b, partition).expect("static game")
    }

    pub fn to_file(&self) -> GameFile {
        GameFile {
            n: self.n(),
            g: self
                .g
                .row_iter()
                .map(|r| r.iter().copied().collect())
                .collect(),
            b: self.b.iter().copied().collect(),
            groups: self.partition.groups().to_vec(),
            rng: None,
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let file: GameFile = serde_json::from_str(&text)?;
        file.into_game()
    }
}

/// Seed and generator identity recorded in generated game files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub generator: String,
    pub version: u32,
    pub seed: u64,
}

/// On-disk game: `{"n", "g" (row-major), "b", "groups"}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameFile {
    pub n: usize,
    pub g: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub groups: Vec<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rng: Option<Provenance>,
}

impl GameFile {
    pub fn into_game(self) -> Result<Game> {
        if self.g.len() != self.n {
            return Err(Error::structural(format!(
                "\"g\" has {} rows, \"n\" is {}",
                self.g.len(),
                self.n
            )));
        }
        if let Some((i, row)) = self.g.iter().enumerate().find(|(_, r)| r.len() != self.n) {
            return Err(Error::structural(format!(
                "row {i} of \"g\" has {} entries, expected {}",
                row.len(),
                self.n
            )));
        }
        let g = DMatrix::from_row_iterator(self.n, self.n, self.g.into_iter().flatten());
        let partition = Partition::new(self.groups, self.n)?;
        Game::new(g, DVector::from_vec(self.b), partition)
    }
}

/// Per-group caps `C_k` on `Σ_{i∈S_k} y_i²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetAllocation {
    caps: Vec<f64>,
}

impl BudgetAllocation {
    pub fn new(caps: Vec<f64>) -> Result<Self> {
        if let Some((k, c)) = caps
            .iter()
            .enumerate()
            .find(|(_, c)| !(c.is_finite() && **c >= 0.0))
        {
            return Err(Error::structural(format!(
                "budget cap {k} must be finite and nonnegative, got {c}"
            )));
        }
        Ok(BudgetAllocation { caps })
    }

    pub fn caps(&self) -> &[f64] {
        &self.caps
    }

    pub fn total(&self) -> f64 {
        self.caps.iter().sum()
    }

    pub fn len(&self) -> usize {
        self.caps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.caps.is_empty()
    }

    pub fn check_against(&self, partition: &Partition) -> Result<()> {
        if self.caps.len() != partition.num_groups() {
            return Err(Error::structural(format!(
                "{} budget caps for {} groups",
                self.caps.len(),
                partition.num_groups()
            )));
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        #[derive(Deserialize)]
        struct Raw {
            caps: Vec<f64>,
        }
        let raw: Raw = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        BudgetAllocation::new(raw.caps)
    }
}

/// Joint intervention vector `y`, indexed by agent.
#[derive(Debug, Clone, PartialEq)]
pub struct InterventionProfile(pub DVector<f64>);

impl InterventionProfile {
    pub fn zeros(n: usize) -> Self {
        InterventionProfile(DVector::zeros(n))
    }

    pub fn from_vec(v: Vec<f64>) -> Self {
        InterventionProfile(DVector::from_vec(v))
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `Σ_{i∈S_k} y_i² ≤ C_k (1 + 1e-9)` for every group.
    pub fn feasible(&self, partition: &Partition, alloc: &BudgetAllocation) -> bool {
        if alloc.len() != partition.num_groups() || self.len() != partition.num_agents() {
            return false;
        }
        partition
            .group_sq_norms(&self.0)
            .iter()
            .zip(alloc.caps())
            .all(|(used, cap)| *used <= cap * (1.0 + FEASIBILITY_TOL))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub symmetric: bool,
    pub zero_diagonal: bool,
    /// `λ_max(G) < 1`: the agents' equilibrium is well posed.
    pub i_minus_g_pd: bool,
    /// `λ_max(G) < ½`: the socially optimal action profile exists.
    pub i_minus_2g_pd: bool,
    pub spectral_radius_g: f64,
    pub lambda_max_g: f64,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.symmetric && self.zero_diagonal && self.i_minus_g_pd
    }
}

/// Structural and spectral checks. PD flags are only reported true for a
/// symmetric `G`.
pub fn validate_game(game: &Game) -> Result<ValidationReport> {
    let symmetric = game.is_symmetric();
    let zero_diagonal = game.has_zero_diagonal();
    let eig = SymEigen::new(game.g())?;
    let lmax = eig.max();
    let spectral_radius_g = eig.max().abs().max(eig.min().abs());
    Ok(ValidationReport {
        symmetric,
        zero_diagonal,
        i_minus_g_pd: symmetric && lmax < 1.0,
        i_minus_2g_pd: symmetric && lmax < 0.5,
        spectral_radius_g,
        lambda_max_g: lmax,
    })
}

/// Entries of `v` on group `k`.
pub fn group_slice(v: &DVector<f64>, partition: &Partition, k: usize) -> Result<DVector<f64>> {
    partition.gather(v, k)
}

pub fn matrix_block(
    m: &DMatrix<f64>,
    partition: &Partition,
    k: usize,
    l: usize,
) -> Result<DMatrix<f64>> {
    partition.matrix_block(m, k, l)
}
