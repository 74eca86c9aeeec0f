//! Exhaustive enumeration for small instances, used to verify the
//! evolutionary search.

use super::front::{ParetoFront, OBJECTIVE_TOL};
use super::step2::RC_EPSILON;
use super::{AllocationEvaluator, AllocationVector, PoolProblem};
use crate::error::{Error, Result};
use crate::loss_data::{AnnualLossMatrix, CountryMeta};
use crate::tail_metrics::{TailKernel, TailSpec};

/// Largest number of allocations the oracle will enumerate.
pub const MAX_ORACLE_SPACE: u128 = 10_000_000;

/// Exact non-dominated front over every feasible allocation.
pub fn exhaustive_oracle(
    matrix: &AnnualLossMatrix,
    meta: &[CountryMeta],
    m: usize,
    spec: &TailSpec,
) -> Result<ParetoFront> {
    let problem = PoolProblem::new(matrix, meta, m)?;
    exhaustive_oracle_problem(&problem, matrix, spec)
}

pub fn exhaustive_oracle_problem(
    problem: &PoolProblem,
    matrix: &AnnualLossMatrix,
    spec: &TailSpec,
) -> Result<ParetoFront> {
    let size = problem.search_space_size();
    if size > MAX_ORACLE_SPACE {
        return Err(Error::SearchSpaceTooLarge {
            size,
            limit: MAX_ORACLE_SPACE,
        });
    }
    let evaluator = AllocationEvaluator::new(matrix, spec, problem.m())?;
    let n = problem.n();
    // mixed-radix odometer over allowed-value positions
    let mut digits = vec![0usize; n];
    let mut front = ParetoFront::new();
    loop {
        let genes: Vec<usize> = digits.iter().enumerate().map(|(i, &d)| problem.allowed(i)[d]).collect();
        let objectives = evaluator.evaluate(&genes).objectives;
        front.insert(&AllocationVector::new(genes), &objectives);

        let mut pos = 0;
        loop {
            if pos == n {
                front.sort();
                return Ok(front);
            }
            digits[pos] += 1;
            if digits[pos] < problem.allowed(pos).len() {
                break;
            }
            digits[pos] = 0;
            pos += 1;
        }
    }
}

/// Result of the exhaustive subset search.
#[derive(Debug, Clone, PartialEq)]
pub struct MinimalSubset {
    /// Matrix column indices.
    pub members: Vec<usize>,
    pub rc: f64,
    /// Smallest RC over all nonempty subsets containing `required`.
    pub best_rc: f64,
}

/// Smallest subset of `pool_members` (containing `required`) with
/// `RC <= max(rc_star, best achievable) + RC_EPSILON`; ties go to the lower
/// RC, then to the lexicographically smaller iso3 list.
pub fn exhaustive_min_subset(
    matrix: &AnnualLossMatrix,
    pool_members: &[usize],
    required: &[usize],
    rc_star: f64,
    spec: &TailSpec,
) -> Result<MinimalSubset> {
    let n = pool_members.len();
    if n == 0 {
        return Err(Error::EmptyMembers);
    }
    if n > 24 {
        return Err(Error::SearchSpaceTooLarge {
            size: 1u128 << n,
            limit: 1 << 24,
        });
    }
    let kernel = TailKernel::new(matrix, spec)?;
    let required_mask: u32 = pool_members
        .iter()
        .enumerate()
        .filter(|(_, j)| required.contains(j))
        .fold(0, |acc, (i, _)| acc | (1 << i));
    let mut all: Vec<(u32, f64)> = Vec::new();
    for mask in 1u32..(1u32 << n) {
        if mask & required_mask != required_mask {
            continue;
        }
        let members: Vec<usize> = (0..n)
            .filter(|i| mask & (1 << i) != 0)
            .map(|i| pool_members[i])
            .collect();
        all.push((mask, kernel.risk_concentration(&members).0));
    }
    let best_rc = all.iter().map(|a| a.1).fold(f64::INFINITY, f64::min);
    let target = if best_rc < rc_star - RC_EPSILON {
        best_rc
    } else {
        rc_star
    };
    let codes = |mask: u32| {
        let mut c: Vec<&str> = (0..n)
            .filter(|i| mask & (1 << i) != 0)
            .map(|i| matrix.countries()[pool_members[i]].as_str())
            .collect();
        c.sort_unstable();
        c
    };
    let (mask, rc) = all
        .iter()
        .filter(|(_, rc)| *rc <= target + RC_EPSILON)
        .min_by(|(ma, ra), (mb, rb)| {
            ma.count_ones()
                .cmp(&mb.count_ones())
                .then_with(|| {
                    if (ra - rb).abs() <= OBJECTIVE_TOL {
                        std::cmp::Ordering::Equal
                    } else {
                        ra.total_cmp(rb)
                    }
                })
                .then_with(|| codes(*ma).cmp(&codes(*mb)))
        })
        .copied()
        .ok_or_else(|| Error::Infeasible(format!("no subset reaches RC {rc_star}")))?;
    Ok(MinimalSubset {
        members: (0..n)
            .filter(|i| mask & (1 << i) != 0)
            .map(|i| pool_members[i])
            .collect(),
        rc,
        best_rc,
    })
}
