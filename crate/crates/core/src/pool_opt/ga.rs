//! Generational loop for step 1: integer genes restricted per country to
//! their allowed pools, uniform crossover, random-reset mutation, and either
//! elitist single-objective survival or reference-direction survival.

use std::collections::{HashMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::front::ParetoFront;
use super::nsga3::{self, NicheInfo, Normalizer};
use super::{AllocationVector, OptimizerConfig, PoolProblem};

pub(crate) struct Step1Run {
    pub front: ParetoFront,
    /// Per generation (index 0 is the initial population), the best value of
    /// each objective in the population.
    pub trace: Vec<Vec<f64>>,
    pub evaluations: usize,
}

/// Memoized fitness with a non-dominated archive of everything evaluated.
pub(crate) struct FitnessCache<K> {
    values: HashMap<K, Vec<f64>>,
    parallel: bool,
}

impl<K: std::hash::Hash + Eq + Clone + Send + Sync> FitnessCache<K> {
    pub fn new(parallel: bool) -> Self {
        Self {
            values: HashMap::new(),
            parallel,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    /// Evaluates the uncached keys of `batch` (concurrently when enabled),
    /// calls `on_new` for each fresh result in batch order, and returns all
    /// fitness vectors in batch order.
    pub fn evaluate<F, G>(&mut self, batch: &[K], eval: &F, mut on_new: G) -> Vec<Vec<f64>>
    where
        F: Fn(&K) -> Vec<f64> + Sync,
        G: FnMut(&K, &[f64]),
    {
        let mut missing: Vec<&K> = Vec::new();
        let mut queued = HashSet::new();
        for k in batch {
            if !self.values.contains_key(k) && queued.insert(k) {
                missing.push(k);
            }
        }
        let fresh: Vec<Vec<f64>> = if self.parallel {
            missing.par_iter().map(|k| eval(k)).collect()
        } else {
            missing.iter().map(|k| eval(k)).collect()
        };
        for (k, f) in missing.into_iter().zip(fresh) {
            on_new(k, &f);
            self.values.insert(k.clone(), f);
        }
        batch.iter().map(|k| self.values[k].clone()).collect()
    }
}

fn random_gene<R: Rng>(allowed: &[usize], rng: &mut R) -> usize {
    allowed[rng.random_range(0..allowed.len())]
}

fn random_individual<R: Rng>(problem: &PoolProblem, rng: &mut R) -> Vec<usize> {
    (0..problem.n()).map(|i| random_gene(problem.allowed(i), rng)).collect()
}

fn uniform_crossover<R: Rng>(a: &[usize], b: &[usize], rate: f64, rng: &mut R) -> (Vec<usize>, Vec<usize>) {
    let mut c1 = a.to_vec();
    let mut c2 = b.to_vec();
    if rng.random_bool(rate) {
        for i in 0..a.len() {
            if rng.random_bool(0.5) {
                std::mem::swap(&mut c1[i], &mut c2[i]);
            }
        }
    }
    (c1, c2)
}

fn mutate<R: Rng>(x: &mut [usize], problem: &PoolProblem, rate: f64, rng: &mut R) {
    for (i, g) in x.iter_mut().enumerate() {
        let allowed = problem.allowed(i);
        if allowed.len() > 1 && rng.random_bool(rate) {
            // uniform over the other allowed values
            let pos = allowed.iter().position(|a| a == g).unwrap_or(0);
            let mut pick = rng.random_range(0..allowed.len() - 1);
            if pick >= pos {
                pick += 1;
            }
            *g = allowed[pick];
        }
    }
}

fn column_minima(objs: &[Vec<f64>]) -> Vec<f64> {
    let m = objs.first().map_or(0, Vec::len);
    (0..m)
        .map(|j| objs.iter().map(|f| f[j]).fold(f64::INFINITY, f64::min))
        .collect()
}

pub(crate) fn run_step1<F>(
    problem: &PoolProblem,
    eval: &F,
    config: &OptimizerConfig,
    seed: u64,
    initial: &[AllocationVector],
    dirs: &[Vec<f64>],
) -> Step1Run
where
    F: Fn(&[usize]) -> Vec<f64> + Sync,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = problem.n();
    let pop_size = config.population_size;
    let mutation_rate = config.mutation_rate.unwrap_or(1.0 / n.max(1) as f64);
    let space = problem.search_space_size();
    let multi = problem.m() >= 2;

    let mut archive = ParetoFront::new();
    let mut cache: FitnessCache<Vec<usize>> = FitnessCache::new(config.parallel);
    let eval_key = |k: &Vec<usize>| eval(k);

    let mut seen = HashSet::new();
    let mut pop: Vec<Vec<usize>> = Vec::with_capacity(pop_size);
    let baseline = problem.baseline();
    for x in std::iter::once(&baseline).chain(initial) {
        if pop.len() < pop_size && seen.insert(x.genes().to_vec()) {
            pop.push(x.genes().to_vec());
        }
    }
    let mut attempts = 0;
    while pop.len() < pop_size && (seen.len() as u128) < space && attempts < 20 * pop_size {
        attempts += 1;
        let x = random_individual(problem, &mut rng);
        if seen.insert(x.clone()) {
            pop.push(x);
        }
    }
    let mut objs = cache.evaluate(&pop, &eval_key, |k, f| {
        archive.insert(&AllocationVector::new(k.clone()), f);
    });

    let mut normalizer = Normalizer::new(problem.m());
    let mut info: Vec<NicheInfo> = Vec::new();
    if multi {
        let kept = nsga3::survive(&objs, pop.len(), dirs, &mut normalizer, &mut rng);
        let (p, o, i) = reorder(&pop, &objs, &kept);
        pop = p;
        objs = o;
        info = i;
    }
    let mut trace = vec![column_minima(&objs)];

    for _ in 0..config.generations {
        if cache.len() as u128 >= space {
            break;
        }
        debug_assert!(pop.iter().all(|x| problem.is_feasible(x)));

        let mut seen_now: HashSet<Vec<usize>> = pop.iter().cloned().collect();
        let mut offspring: Vec<Vec<usize>> = Vec::with_capacity(pop_size);
        let mut attempts = 0;
        while offspring.len() < pop_size && attempts < 10 * pop_size {
            attempts += 1;
            let p1 = select(&objs, &info, multi, &mut rng);
            let p2 = select(&objs, &info, multi, &mut rng);
            let (mut c1, mut c2) = uniform_crossover(&pop[p1], &pop[p2], config.crossover_rate, &mut rng);
            mutate(&mut c1, problem, mutation_rate, &mut rng);
            mutate(&mut c2, problem, mutation_rate, &mut rng);
            for c in [c1, c2] {
                if offspring.len() < pop_size && seen_now.insert(c.clone()) {
                    offspring.push(c);
                }
            }
        }
        if offspring.is_empty() {
            break;
        }
        let off_objs = cache.evaluate(&offspring, &eval_key, |k, f| {
            archive.insert(&AllocationVector::new(k.clone()), f);
        });

        let mut merged = pop;
        merged.extend(offspring);
        let mut merged_objs = objs;
        merged_objs.extend(off_objs);
        let keep = pop_size.min(merged.len());
        if multi {
            let kept = nsga3::survive(&merged_objs, keep, dirs, &mut normalizer, &mut rng);
            let (p, o, i) = reorder(&merged, &merged_objs, &kept);
            pop = p;
            objs = o;
            info = i;
        } else {
            let mut order: Vec<usize> = (0..merged.len()).collect();
            order.sort_by(|&a, &b| {
                merged_objs[a][0]
                    .total_cmp(&merged_objs[b][0])
                    .then_with(|| merged[a].cmp(&merged[b]))
            });
            order.truncate(keep);
            pop = order.iter().map(|&i| merged[i].clone()).collect();
            objs = order.iter().map(|&i| merged_objs[i].clone()).collect();
        }
        trace.push(column_minima(&objs));
    }

    archive.sort();
    Step1Run {
        front: archive,
        trace,
        evaluations: cache.len(),
    }
}

type Reordered = (Vec<Vec<usize>>, Vec<Vec<f64>>, Vec<NicheInfo>);

fn reorder(pop: &[Vec<usize>], objs: &[Vec<f64>], kept: &[(usize, NicheInfo)]) -> Reordered {
    (
        kept.iter().map(|&(i, _)| pop[i].clone()).collect(),
        kept.iter().map(|&(i, _)| objs[i].clone()).collect(),
        kept.iter().map(|&(_, info)| info).collect(),
    )
}

fn select<R: Rng>(objs: &[Vec<f64>], info: &[NicheInfo], multi: bool, rng: &mut R) -> usize {
    if multi {
        nsga3::niche_tournament(info, rng)
    } else {
        let a = rng.random_range(0..objs.len());
        let b = rng.random_range(0..objs.len());
        if objs[b][0] < objs[a][0] {
            b
        } else {
            a
        }
    }
}
