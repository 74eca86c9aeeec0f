//! Two-step search for optimal pool compositions.
//!
//! Step 1 assigns every country to one of `m` pools or to none, minimizing
//! each pool's risk concentration (a single objective GA for `m = 1`, a
//! reference-direction non-dominated sorting GA for `m >= 2`, merged over
//! several seeds). Step 2 shrinks each resulting pool to the smallest subset
//! that keeps its concentration. [`oracle`] enumerates small instances
//! exhaustively for verification.

mod front;
mod ga;
pub mod nsga3;
pub mod oracle;
mod step2;

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss_data::{AnnualLossMatrix, CountryMeta};
use crate::tail_metrics::{TailKernel, TailSpec};

pub use front::{dominates, merge_fronts, non_dominated_fronts, FrontEntry, ParetoFront, OBJECTIVE_TOL};
pub use oracle::{exhaustive_min_subset, exhaustive_oracle, exhaustive_oracle_problem};
pub use step2::{optimize_step2, optimize_step2_with_required, Step2Outcome, RC_EPSILON};

/// Pool index per country; 0 means the country joins no pool.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AllocationVector(Vec<usize>);

impl AllocationVector {
    pub fn new(genes: Vec<usize>) -> Self {
        Self(genes)
    }

    pub fn genes(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Country indices assigned to `pool` (1-based).
    pub fn members_of(&self, pool: usize) -> Vec<usize> {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, &g)| g == pool)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Membership flags over the step-1 members of one pool.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SelectionVector(pub Vec<bool>);

impl SelectionVector {
    pub fn count(&self) -> usize {
        self.0.iter().filter(|&&z| z).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub population_size: usize,
    pub generations: usize,
    pub crossover_rate: f64,
    /// Per-gene mutation probability; `None` means `1 / n`.
    pub mutation_rate: Option<f64>,
    /// Independent runs merged into the final front.
    pub seeds: usize,
    pub rng_seed: u64,
    /// Das-Dennis partitions for `m >= 2`; `None` picks the smallest count
    /// giving at least `population_size` directions.
    pub reference_direction_partitions: Option<usize>,
    /// Evaluate fitness (and independent runs) on the rayon pool.
    pub parallel: bool,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            population_size: 200,
            generations: 500,
            crossover_rate: 0.9,
            mutation_rate: None,
            seeds: 15,
            rng_seed: 0,
            reference_direction_partitions: None,
            parallel: false,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidOptimizerConfig(msg.to_string()));
        if self.population_size < 4 || !self.population_size.is_multiple_of(2) {
            return bad("population_size must be even and at least 4");
        }
        if !(0.0..=1.0).contains(&self.crossover_rate) {
            return bad("crossover_rate must lie in [0, 1]");
        }
        if let Some(r) = self.mutation_rate {
            if !(0.0..=1.0).contains(&r) {
                return bad("mutation_rate must lie in [0, 1]");
            }
        }
        if self.seeds == 0 {
            return bad("seeds must be at least 1");
        }
        if self.reference_direction_partitions == Some(0) {
            return bad("reference_direction_partitions must be positive");
        }
        Ok(())
    }

    /// Seed of independent run `r`.
    pub fn run_seed(&self, r: usize) -> u64 {
        self.rng_seed.wrapping_add(r as u64)
    }
}

/// Allowed pool indices per country for an `m`-pool allocation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoolProblem {
    m: usize,
    allowed: Vec<Vec<usize>>,
}

impl PoolProblem {
    /// Each gene's allowed set must be nonempty, sorted and within `0..=m`.
    pub fn from_allowed(m: usize, allowed: Vec<Vec<usize>>) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidOptimizerConfig("pool count must be at least 1".into()));
        }
        let mut allowed = allowed;
        for (i, a) in allowed.iter_mut().enumerate() {
            a.sort_unstable();
            a.dedup();
            if a.is_empty() {
                return Err(Error::Infeasible(format!("country {i} has no allowed pool")));
            }
            if let Some(&p) = a.iter().find(|&&p| p > m) {
                return Err(Error::Infeasible(format!(
                    "country {i} allows pool {p} but only {m} pools exist"
                )));
            }
        }
        Ok(Self { m, allowed })
    }

    /// Constraints from country metadata. Countries without metadata are free
    /// agents; metadata for countries absent from the matrix is ignored.
    pub fn new(matrix: &AnnualLossMatrix, meta: &[CountryMeta], m: usize) -> Result<Self> {
        let by_code: HashMap<&str, &CountryMeta> = meta.iter().map(|c| (c.iso3.as_str(), c)).collect();
        let mut allowed = Vec::with_capacity(matrix.n_countries());
        for iso3 in matrix.countries() {
            let set = match by_code.get(iso3.as_str()) {
                Some(c) => {
                    c.validate()?;
                    match (c.pinned_pool, &c.allowed_pools) {
                        (Some(p), _) if p > m => {
                            return Err(Error::Infeasible(format!(
                                "{iso3} pinned to pool {p} but only {m} pools exist"
                            )))
                        }
                        (Some(p), _) => vec![p],
                        (None, Some(a)) => std::iter::once(0)
                            .chain(a.iter().copied().filter(|&p| p <= m))
                            .collect(),
                        (None, None) => (0..=m).collect(),
                    }
                }
                None => (0..=m).collect(),
            };
            allowed.push(set);
        }
        Self::from_allowed(m, allowed)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.allowed.len()
    }

    pub fn allowed(&self, i: usize) -> &[usize] {
        &self.allowed[i]
    }

    pub fn is_feasible(&self, x: &[usize]) -> bool {
        x.len() == self.allowed.len() && x.iter().zip(&self.allowed).all(|(g, a)| a.contains(g))
    }

    /// Number of feasible allocations, saturating at `u128::MAX`.
    pub fn search_space_size(&self) -> u128 {
        self.allowed
            .iter()
            .fold(1u128, |acc, a| acc.saturating_mul(a.len() as u128))
    }

    /// Pinned countries at their pool, everyone else out.
    pub fn baseline(&self) -> AllocationVector {
        AllocationVector(
            self.allowed
                .iter()
                .map(|a| if a.contains(&0) { 0 } else { a[0] })
                .collect(),
        )
    }
}

/// Per-pool concentrations of one allocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    /// RC_1..RC_m; empty pools score 1.
    pub objectives: Vec<f64>,
    pub empty: Vec<bool>,
}

/// Scores allocations against one loss matrix.
#[derive(Debug, Clone)]
pub struct AllocationEvaluator<'a> {
    kernel: TailKernel<'a>,
    m: usize,
}

impl<'a> AllocationEvaluator<'a> {
    pub fn new(matrix: &'a AnnualLossMatrix, spec: &TailSpec, m: usize) -> Result<Self> {
        Ok(Self {
            kernel: TailKernel::new(matrix, spec)?,
            m,
        })
    }

    pub fn kernel(&self) -> &TailKernel<'a> {
        &self.kernel
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn evaluate(&self, genes: &[usize]) -> Evaluation {
        let mut members = vec![Vec::new(); self.m + 1];
        for (i, &g) in genes.iter().enumerate() {
            members[g].push(i);
        }
        let mut objectives = Vec::with_capacity(self.m);
        let mut empty = Vec::with_capacity(self.m);
        for pool in &members[1..] {
            if pool.is_empty() {
                objectives.push(1.0);
                empty.push(true);
            } else {
                objectives.push(self.kernel.risk_concentration(pool).0);
                empty.push(false);
            }
        }
        Evaluation { objectives, empty }
    }
}

/// RC of every pool under allocation `x`.
pub fn evaluate_allocation(
    x: &AllocationVector,
    matrix: &AnnualLossMatrix,
    spec: &TailSpec,
    m: usize,
) -> Result<Evaluation> {
    if x.len() != matrix.n_countries() {
        return Err(Error::Shape(format!(
            "allocation has {} genes for {} countries",
            x.len(),
            matrix.n_countries()
        )));
    }
    if let Some(&g) = x.genes().iter().find(|&&g| g > m) {
        return Err(Error::Infeasible(format!("gene value {g} exceeds pool count {m}")));
    }
    Ok(AllocationEvaluator::new(matrix, spec, m)?.evaluate(x.genes()))
}

/// Best objective values of one run's population, per generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRecord {
    pub run: usize,
    pub generation: usize,
    pub best: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Step1Outcome {
    pub front: ParetoFront,
    pub convergence: Vec<ConvergenceRecord>,
    /// Distinct allocations evaluated, summed over runs.
    pub evaluations: usize,
}

/// Step 1 over the constraints in `meta`.
pub fn optimize_step1(
    matrix: &AnnualLossMatrix,
    meta: &[CountryMeta],
    m: usize,
    spec: &TailSpec,
    config: &OptimizerConfig,
) -> Result<Step1Outcome> {
    let problem = PoolProblem::new(matrix, meta, m)?;
    optimize_step1_problem(&problem, matrix, spec, config, &[])
}

/// Step 1 over an explicit problem. `initial` allocations join the first
/// population of every run next to the pinned-only baseline.
pub fn optimize_step1_problem(
    problem: &PoolProblem,
    matrix: &AnnualLossMatrix,
    spec: &TailSpec,
    config: &OptimizerConfig,
    initial: &[AllocationVector],
) -> Result<Step1Outcome> {
    config.validate()?;
    if problem.n() != matrix.n_countries() {
        return Err(Error::Shape(format!(
            "problem has {} countries, matrix {}",
            problem.n(),
            matrix.n_countries()
        )));
    }
    if let Some(bad) = initial.iter().find(|x| !problem.is_feasible(x.genes())) {
        return Err(Error::Infeasible(format!(
            "initial allocation {:?} violates constraints",
            bad.genes()
        )));
    }
    let evaluator = AllocationEvaluator::new(matrix, spec, problem.m())?;
    let dirs = if problem.m() >= 2 {
        let h = config
            .reference_direction_partitions
            .unwrap_or_else(|| nsga3::default_partitions(problem.m(), config.population_size));
        nsga3::das_dennis(problem.m(), h)
    } else {
        Vec::new()
    };
    let eval = |g: &[usize]| evaluator.evaluate(g).objectives;
    let run = |r: usize| ga::run_step1(problem, &eval, config, config.run_seed(r), initial, &dirs);
    let runs: Vec<ga::Step1Run> = if config.parallel {
        (0..config.seeds).into_par_iter().map(run).collect()
    } else {
        (0..config.seeds).map(run).collect()
    };

    let front = merge_fronts(runs.iter().map(|r| &r.front));
    let mut convergence = Vec::new();
    let mut evaluations = 0;
    for (r, run) in runs.into_iter().enumerate() {
        evaluations += run.evaluations;
        convergence.extend(
            run.trace
                .into_iter()
                .enumerate()
                .map(|(generation, best)| ConvergenceRecord {
                    run: r,
                    generation,
                    best,
                }),
        );
    }
    Ok(Step1Outcome {
        front,
        convergence,
        evaluations,
    })
}
