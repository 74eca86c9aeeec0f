//! Pareto dominance, non-dominated archives and non-dominated sorting.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::AllocationVector;

/// Objective values closer than this are treated as equal.
pub const OBJECTIVE_TOL: f64 = 1e-12;

/// `a` dominates `b` under minimization: no worse anywhere (within
/// [`OBJECTIVE_TOL`]) and strictly better somewhere by more than it.
pub fn dominates(a: &[f64], b: &[f64]) -> bool {
    let mut strictly = false;
    for (&x, &y) in a.iter().zip(b) {
        if x > y + OBJECTIVE_TOL {
            return false;
        }
        if x < y - OBJECTIVE_TOL {
            strictly = true;
        }
    }
    strictly
}

pub fn objectives_equal(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| (x - y).abs() <= OBJECTIVE_TOL)
}

/// Plain Pareto dominance without tolerance, used for survival ranking.
fn dominates_exact(a: &[f64], b: &[f64]) -> bool {
    let mut strictly = false;
    for (&x, &y) in a.iter().zip(b) {
        if x > y {
            return false;
        }
        if x < y {
            strictly = true;
        }
    }
    strictly
}

/// Preference among allocations with equal objectives: fewer empty pools,
/// then fewer pooled countries, then lexicographically smaller vector.
fn representative_cmp(a: &AllocationVector, b: &AllocationVector, m: usize) -> Ordering {
    let key = |x: &AllocationVector| {
        let mut used = vec![false; m + 1];
        let mut pooled = 0usize;
        for &g in x.genes() {
            used[g] = true;
            if g != 0 {
                pooled += 1;
            }
        }
        let empty = used[1..].iter().filter(|u| !**u).count();
        (empty, pooled)
    };
    key(a).cmp(&key(b)).then_with(|| a.genes().cmp(b.genes()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontEntry {
    pub allocation: AllocationVector,
    /// RC_1..RC_m.
    pub objectives: Vec<f64>,
}

/// Mutually non-dominated allocations, one representative per objective
/// vector.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParetoFront {
    entries: Vec<FrontEntry>,
}

impl ParetoFront {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn entries(&self) -> &[FrontEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Offers a candidate; returns whether the front changed.
    pub fn insert(&mut self, allocation: &AllocationVector, objectives: &[f64]) -> bool {
        let m = objectives.len();
        for e in self.entries.iter_mut() {
            if dominates(&e.objectives, objectives) {
                return false;
            }
            if objectives_equal(&e.objectives, objectives) {
                if representative_cmp(allocation, &e.allocation, m) == Ordering::Less {
                    e.allocation = allocation.clone();
                    e.objectives = objectives.to_vec();
                    return true;
                }
                return false;
            }
        }
        self.entries.retain(|e| !dominates(objectives, &e.objectives));
        self.entries.push(FrontEntry {
            allocation: allocation.clone(),
            objectives: objectives.to_vec(),
        });
        true
    }

    /// Orders entries by objective vector, then allocation.
    pub fn sort(&mut self) {
        self.entries.sort_by(|a, b| {
            a.objectives
                .iter()
                .zip(&b.objectives)
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(Ordering::Equal)
                .then_with(|| a.allocation.genes().cmp(b.allocation.genes()))
        });
    }

    /// Whether any entry dominates `objectives`.
    pub fn dominates_point(&self, objectives: &[f64]) -> bool {
        self.entries.iter().any(|e| dominates(&e.objectives, objectives))
    }

    /// Whether some entry weakly dominates `objectives` (no worse anywhere
    /// within `tol`).
    pub fn covers(&self, objectives: &[f64], tol: f64) -> bool {
        self.entries
            .iter()
            .any(|e| e.objectives.iter().zip(objectives).all(|(a, b)| *a <= b + tol))
    }

    /// O(P^2) check that no entry dominates another.
    pub fn is_mutually_non_dominated(&self) -> bool {
        self.entries.iter().enumerate().all(|(i, a)| {
            self.entries
                .iter()
                .enumerate()
                .all(|(j, b)| i == j || !dominates(&a.objectives, &b.objectives))
        })
    }
}

/// Union of fronts filtered to its non-dominated entries.
pub fn merge_fronts<'a, I: IntoIterator<Item = &'a ParetoFront>>(fronts: I) -> ParetoFront {
    let mut merged = ParetoFront::new();
    for front in fronts {
        for e in &front.entries {
            merged.insert(&e.allocation, &e.objectives);
        }
    }
    merged.sort();
    merged
}

/// Non-dominated sorting by efficient sequential search: solutions are
/// visited in lexicographic order, so each can only be dominated by ones
/// already placed. Returns the fronts as index lists, best first.
pub fn non_dominated_fronts(objectives: &[Vec<f64>]) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..objectives.len()).collect();
    order.sort_by(|&a, &b| {
        objectives[a]
            .iter()
            .zip(&objectives[b])
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut fronts: Vec<Vec<usize>> = Vec::new();
    for i in order {
        let placed = fronts.iter_mut().find(|front| {
            !front
                .iter()
                .rev()
                .any(|&j| dominates_exact(&objectives[j], &objectives[i]))
        });
        match placed {
            Some(front) => front.push(i),
            None => fronts.push(vec![i]),
        }
    }
    fronts
}
