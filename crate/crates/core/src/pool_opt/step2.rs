//! Step 2: the smallest subset of a pool that keeps its concentration.
//!
//! The equality constraint `RC(subset) = RC*` is relaxed to
//! `RC(subset) <= RC* + RC_EPSILON`. Selection is feasibility-first: a
//! feasible subset beats an infeasible one, fewer members beat more, and
//! among equal cardinality the lower concentration wins.

use std::cmp::Ordering;
use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::front::OBJECTIVE_TOL;
use super::ga::FitnessCache;
use super::{OptimizerConfig, SelectionVector};
use crate::error::{Error, Result};
use crate::loss_data::AnnualLossMatrix;
use crate::tail_metrics::{TailKernel, TailSpec};

/// Slack on the concentration constraint.
pub const RC_EPSILON: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step2Outcome {
    /// Over the step-1 pool members, in the order they were given.
    pub selection: SelectionVector,
    /// Matrix column indices of the retained members.
    pub members: Vec<usize>,
    pub rc: f64,
    /// The target actually used; lower than the input when a strictly better
    /// subset was found.
    pub rc_star: f64,
    pub improved_rc_star: bool,
    pub diagnostics: Vec<String>,
    /// Best (cardinality, rc) among feasible subsets, per generation.
    pub trace: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, Copy)]
struct Scored {
    card: usize,
    rc: f64,
}

fn feasible(s: Scored, threshold: f64) -> bool {
    s.card > 0 && s.rc <= threshold + RC_EPSILON
}

fn compare(a: Scored, b: Scored, threshold: f64) -> Ordering {
    match (feasible(a, threshold), feasible(b, threshold)) {
        (true, false) => Ordering::Less,
        (false, true) => Ordering::Greater,
        (true, true) => a.card.cmp(&b.card).then(a.rc.total_cmp(&b.rc)),
        (false, false) => a.rc.total_cmp(&b.rc).then(a.card.cmp(&b.card)),
    }
}

/// Step 2 without fixed members.
pub fn optimize_step2(
    matrix: &AnnualLossMatrix,
    pool_members: &[usize],
    rc_star: f64,
    spec: &TailSpec,
    config: &OptimizerConfig,
) -> Result<Step2Outcome> {
    optimize_step2_with_required(matrix, pool_members, &[], rc_star, spec, config)
}

/// Step 2 where every column in `required` (a subset of `pool_members`) must
/// stay in the pool.
pub fn optimize_step2_with_required(
    matrix: &AnnualLossMatrix,
    pool_members: &[usize],
    required: &[usize],
    rc_star: f64,
    spec: &TailSpec,
    config: &OptimizerConfig,
) -> Result<Step2Outcome> {
    config.validate()?;
    if pool_members.is_empty() {
        return Err(Error::EmptyMembers);
    }
    let kernel = TailKernel::new(matrix, spec)?;
    let n = pool_members.len();
    let fixed: Vec<bool> = pool_members.iter().map(|j| required.contains(j)).collect();
    if let Some(r) = required.iter().find(|r| !pool_members.contains(r)) {
        return Err(Error::InvalidConfig(format!(
            "required member {} is not in the pool",
            matrix.countries()[*r]
        )));
    }
    let free: Vec<usize> = (0..n).filter(|&i| !fixed[i]).collect();

    let subset = |z: &[bool]| -> Vec<usize> {
        z.iter()
            .zip(pool_members)
            .filter(|(&b, _)| b)
            .map(|(_, &j)| j)
            .collect()
    };
    let eval = |z: &Vec<bool>| -> Vec<f64> {
        let members = subset(z);
        if members.is_empty() {
            vec![f64::INFINITY]
        } else {
            vec![kernel.risk_concentration(&members).0]
        }
    };
    let score = |z: &[bool], f: &[f64]| Scored {
        card: z.iter().filter(|&&b| b).count(),
        rc: f[0],
    };

    let space: u128 = 1u128.checked_shl(free.len() as u32).unwrap_or(u128::MAX);
    let pop_size = config.population_size;
    let mutation_rate = config.mutation_rate.unwrap_or(1.0 / free.len().max(1) as f64);
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let mut cache: FitnessCache<Vec<bool>> = FitnessCache::new(config.parallel);
    let mut evaluated: Vec<(Vec<bool>, f64)> = Vec::new();
    let mut threshold = rc_star;

    let mut seen = HashSet::new();
    let mut pop: Vec<Vec<bool>> = Vec::new();
    let full = vec![true; n];
    seen.insert(full.clone());
    pop.push(full);
    let mut attempts = 0;
    while pop.len() < pop_size && (seen.len() as u128) < space && attempts < 20 * pop_size {
        attempts += 1;
        let density: f64 = rng.random();
        let z: Vec<bool> = (0..n).map(|i| fixed[i] || rng.random_bool(density)).collect();
        if seen.insert(z.clone()) {
            pop.push(z);
        }
    }
    let mut objs = cache.evaluate(&pop, &eval, |z, f| evaluated.push((z.clone(), f[0])));
    let update_threshold = |threshold: &mut f64, evaluated: &[(Vec<bool>, f64)]| {
        let best = evaluated.iter().map(|e| e.1).fold(f64::INFINITY, f64::min);
        if best < *threshold - RC_EPSILON {
            *threshold = best;
        }
    };
    update_threshold(&mut threshold, &evaluated);

    let best_of = |pop: &[Vec<bool>], objs: &[Vec<f64>], threshold: f64| {
        pop.iter()
            .zip(objs)
            .map(|(z, f)| score(z, f))
            .filter(|s| feasible(*s, threshold))
            .min_by(|a, b| compare(*a, *b, threshold))
            .map(|s| (s.card, s.rc))
            .unwrap_or((n, f64::NAN))
    };
    let mut trace = vec![best_of(&pop, &objs, threshold)];

    for _ in 0..config.generations {
        if cache.len() as u128 >= space {
            break;
        }
        let mut seen_now: HashSet<Vec<bool>> = pop.iter().cloned().collect();
        let mut offspring = Vec::with_capacity(pop_size);
        let mut attempts = 0;
        while offspring.len() < pop_size && attempts < 10 * pop_size {
            attempts += 1;
            let pick = |rng: &mut ChaCha8Rng| {
                let a = rng.random_range(0..pop.len());
                let b = rng.random_range(0..pop.len());
                match compare(score(&pop[a], &objs[a]), score(&pop[b], &objs[b]), threshold) {
                    Ordering::Greater => b,
                    _ => a,
                }
            };
            let p1 = pick(&mut rng);
            let p2 = pick(&mut rng);
            let mut c1 = pop[p1].clone();
            let mut c2 = pop[p2].clone();
            if rng.random_bool(config.crossover_rate) {
                for &i in &free {
                    if rng.random_bool(0.5) {
                        std::mem::swap(&mut c1[i], &mut c2[i]);
                    }
                }
            }
            for c in [&mut c1, &mut c2] {
                for &i in &free {
                    if rng.random_bool(mutation_rate) {
                        c[i] = !c[i];
                    }
                }
            }
            for c in [c1, c2] {
                if offspring.len() < pop_size && seen_now.insert(c.clone()) {
                    offspring.push(c);
                }
            }
        }
        if offspring.is_empty() {
            break;
        }
        let off_objs = cache.evaluate(&offspring, &eval, |z, f| evaluated.push((z.clone(), f[0])));
        update_threshold(&mut threshold, &evaluated);

        let mut merged = pop;
        merged.extend(offspring);
        let mut merged_objs = objs;
        merged_objs.extend(off_objs);
        let mut order: Vec<usize> = (0..merged.len()).collect();
        order.sort_by(|&a, &b| {
            compare(
                score(&merged[a], &merged_objs[a]),
                score(&merged[b], &merged_objs[b]),
                threshold,
            )
            .then_with(|| merged[b].cmp(&merged[a]))
        });
        order.truncate(pop_size);
        pop = order.iter().map(|&i| merged[i].clone()).collect();
        objs = order.iter().map(|&i| merged_objs[i].clone()).collect();
        trace.push(best_of(&pop, &objs, threshold));
    }

    let mut diagnostics = Vec::new();
    let improved = threshold < rc_star - RC_EPSILON;
    if improved {
        let msg = format!("subset search found RC {threshold} below step-1 optimum {rc_star}; step 1 was suboptimal");
        log::info!("{msg}");
        diagnostics.push(msg);
    }

    let codes = |z: &[bool]| -> Vec<&str> {
        subset(z)
            .into_iter()
            .map(|j| matrix.countries()[j].as_str())
            .collect::<Vec<_>>()
    };
    let best = evaluated
        .iter()
        .filter(|(z, rc)| feasible(score(z, &[*rc]), threshold))
        .min_by(|(za, ra), (zb, rb)| {
            let (ca, cb) = (score(za, &[*ra]).card, score(zb, &[*rb]).card);
            ca.cmp(&cb)
                .then_with(|| {
                    if (ra - rb).abs() <= OBJECTIVE_TOL {
                        Ordering::Equal
                    } else {
                        ra.total_cmp(rb)
                    }
                })
                .then_with(|| {
                    let (mut a, mut b) = (codes(za), codes(zb));
                    a.sort_unstable();
                    b.sort_unstable();
                    a.cmp(&b)
                })
        });
    let (z, rc) = match best {
        Some((z, rc)) => (z.clone(), *rc),
        None => {
            // the full pool misses the target; keep it and say so
            let full = vec![true; n];
            let rc = kernel.risk_concentration(&subset(&full)).0;
            let msg = format!("full pool RC {rc} does not reach target {rc_star}; keeping all members");
            log::warn!("{msg}");
            diagnostics.push(msg);
            (full, rc)
        }
    };
    Ok(Step2Outcome {
        members: subset(&z),
        selection: SelectionVector(z),
        rc,
        rc_star: threshold,
        improved_rc_star: improved,
        diagnostics,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> OptimizerConfig {
        OptimizerConfig {
            population_size: 16,
            generations: 30,
            ..Default::default()
        }
    }

    fn matrix(cols: Vec<Vec<f64>>) -> AnnualLossMatrix {
        let names = ["AAA", "BBB", "CCC", "DDD"];
        AnnualLossMatrix::from_columns(
            (1..=cols[0].len() as i64).collect(),
            names[..cols.len()].iter().map(|s| s.to_string()).collect(),
            cols,
        )
        .unwrap()
    }

    fn k1() -> TailSpec {
        TailSpec::new(0.75).unwrap()
    }

    #[test]
    fn drops_member_without_tail_contribution() {
        let m = matrix(vec![
            vec![10.0, 0.0, 0.0, 0.0],
            vec![0.0, 10.0, 0.0, 0.0],
            vec![0.0, 0.0, 0.0, 0.0],
        ]);
        let out = optimize_step2(&m, &[0, 1, 2], 0.5, &k1(), &cfg()).unwrap();
        assert_eq!(out.members, vec![0, 1]);
        assert_eq!(out.selection.0, vec![true, true, false]);
        assert_eq!(out.rc, 0.5);
        assert!(!out.improved_rc_star);
    }

    #[test]
    fn quiet_member_with_own_tail_is_kept() {
        // a member that is zero in the pool tail still enlarges the
        // standalone-ES denominator, so dropping it raises RC
        let m = matrix(vec![
            vec![10.0, 0.0, 0.0, 0.0],
            vec![0.0, 10.0, 0.0, 0.0],
            vec![0.0, 0.0, 0.0, 1.0],
        ]);
        let full = TailKernel::new(&m, &k1()).unwrap().risk_concentration(&[0, 1, 2]).0;
        assert!((full - 10.0 / 21.0).abs() < 1e-15);
        let out = optimize_step2(&m, &[0, 1, 2], full, &k1(), &cfg()).unwrap();
        assert_eq!(out.members, vec![0, 1, 2]);
    }

    #[test]
    fn singleton_pool_cannot_shrink() {
        let m = matrix(vec![vec![1.0, 2.0, 3.0, 4.0]]);
        let out = optimize_step2(&m, &[0], 1.0, &k1(), &cfg()).unwrap();
        assert_eq!(out.selection.0, vec![true]);
    }

    #[test]
    fn comonotone_pair_reduces_to_one() {
        let m = matrix(vec![vec![1.0, 2.0, 3.0, 4.0], vec![2.0, 4.0, 6.0, 8.0]]);
        let out = optimize_step2(&m, &[0, 1], 1.0, &k1(), &cfg()).unwrap();
        assert_eq!(out.selection.count(), 1);
        // lexicographic tie-break by iso3
        assert_eq!(out.members, vec![0]);
    }

    #[test]
    fn improves_target_when_step1_was_suboptimal() {
        let m = matrix(vec![
            vec![10.0, 0.0, 0.0, 0.0],
            vec![0.0, 10.0, 0.0, 0.0],
            vec![9.0, 0.0, 0.0, 0.0],
        ]);
        // full set RC: pool = [19,10,0,0], es 19 over 29; pair {0,1}: 0.5
        let out = optimize_step2(&m, &[0, 1, 2], 19.0 / 29.0, &k1(), &cfg()).unwrap();
        assert!(out.improved_rc_star);
        assert_eq!(out.rc_star, 0.5);
        assert_eq!(out.members, vec![0, 1]);
        assert_eq!(out.diagnostics.len(), 1);
    }

    #[test]
    fn required_members_are_kept() {
        let m = matrix(vec![vec![1.0, 2.0, 3.0, 4.0], vec![2.0, 4.0, 6.0, 8.0]]);
        let out = optimize_step2_with_required(&m, &[0, 1], &[1], 1.0, &k1(), &cfg()).unwrap();
        assert_eq!(out.members, vec![1]);
        assert!(optimize_step2_with_required(&m, &[0], &[1], 1.0, &k1(), &cfg()).is_err());
    }
}
