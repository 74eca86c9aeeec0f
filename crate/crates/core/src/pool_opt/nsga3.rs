//! Reference-direction machinery for many-objective survival: Das-Dennis
//! directions, hyperplane normalization, niche association and niching.

use rand::seq::SliceRandom;
use rand::Rng;

use super::front::non_dominated_fronts;

/// All points with `m` nonnegative coordinates summing to one on a grid of
/// `partitions` steps.
pub fn das_dennis(m: usize, partitions: usize) -> Vec<Vec<f64>> {
    fn rec(out: &mut Vec<Vec<f64>>, cur: &mut Vec<usize>, left: usize, m: usize, h: usize) {
        if cur.len() == m - 1 {
            cur.push(left);
            out.push(cur.iter().map(|&c| c as f64 / h as f64).collect());
            cur.pop();
            return;
        }
        for c in 0..=left {
            cur.push(c);
            rec(out, cur, left - c, m, h);
            cur.pop();
        }
    }
    if m == 0 {
        return Vec::new();
    }
    if m == 1 || partitions == 0 {
        return vec![vec![1.0 / m as f64; m]];
    }
    let mut out = Vec::new();
    rec(&mut out, &mut Vec::with_capacity(m), partitions, m, partitions);
    out
}

/// Binomial coefficient, saturating.
pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1usize, |acc, i| acc.saturating_mul(n - i) / (i + 1))
}

/// Smallest partition count whose direction count reaches `population`.
pub fn default_partitions(m: usize, population: usize) -> usize {
    if m <= 1 {
        return 1;
    }
    (1..)
        .find(|&h| binomial(h + m - 1, m - 1) >= population)
        .expect("direction count grows without bound")
}

/// Per-individual state produced by survival and consumed by mating
/// selection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NicheInfo {
    pub rank: usize,
    pub niche: usize,
    pub distance: f64,
}

/// Normalization state carried across generations.
#[derive(Debug, Clone)]
pub struct Normalizer {
    ideal: Vec<f64>,
    extremes: Option<Vec<Vec<f64>>>,
}

impl Normalizer {
    pub fn new(m: usize) -> Self {
        Self {
            ideal: vec![f64::INFINITY; m],
            extremes: None,
        }
    }

    /// Updates ideal and extreme points and returns the nadir estimate.
    fn update(&mut self, objs: &[Vec<f64>], first_front: &[usize], survivors: &[usize]) -> Vec<f64> {
        let m = self.ideal.len();
        for f in objs {
            for (i, &v) in f.iter().enumerate() {
                self.ideal[i] = self.ideal[i].min(v);
            }
        }
        let ideal = &self.ideal;

        let mut candidates: Vec<&Vec<f64>> = survivors.iter().map(|&i| &objs[i]).collect();
        if let Some(prev) = &self.extremes {
            candidates.extend(prev.iter());
        }
        let extremes: Vec<Vec<f64>> = (0..m)
            .map(|axis| {
                let asf = |f: &Vec<f64>| {
                    f.iter()
                        .enumerate()
                        .map(|(i, &v)| {
                            let w = if i == axis { 1.0 } else { 1e-6 };
                            (v - ideal[i]) / w
                        })
                        .fold(f64::NEG_INFINITY, f64::max)
                };
                candidates
                    .iter()
                    .min_by(|a, b| asf(a).total_cmp(&asf(b)))
                    .map(|f| (*f).clone())
                    .unwrap_or_else(|| ideal.clone())
            })
            .collect();

        let worst_pop: Vec<f64> = (0..m)
            .map(|i| objs.iter().map(|f| f[i]).fold(f64::NEG_INFINITY, f64::max))
            .collect();
        let worst_front: Vec<f64> = (0..m)
            .map(|i| {
                first_front
                    .iter()
                    .map(|&j| objs[j][i])
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect();

        let shifted: Vec<Vec<f64>> = extremes
            .iter()
            .map(|e| e.iter().zip(ideal).map(|(v, z)| v - z).collect())
            .collect();
        let mut nadir = match solve_hyperplane(&shifted) {
            Some(plane) => {
                let intercepts: Vec<f64> = plane.iter().map(|p| 1.0 / p).collect();
                let nadir: Vec<f64> = intercepts.iter().zip(ideal).map(|(a, z)| z + a).collect();
                let ok = intercepts.iter().all(|&a| a.is_finite() && a > 1e-6)
                    && nadir.iter().zip(&worst_pop).all(|(n, w)| n <= w);
                if ok {
                    nadir
                } else {
                    worst_front.clone()
                }
            }
            None => worst_front.clone(),
        };
        for i in 0..m {
            if nadir[i] - ideal[i] <= 1e-6 {
                nadir[i] = worst_pop[i];
            }
        }
        self.extremes = Some(extremes);
        nadir
    }
}

/// Solves `A x = 1` by Gaussian elimination with partial pivoting.
fn solve_hyperplane(a: &[Vec<f64>]) -> Option<Vec<f64>> {
    let m = a.len();
    let mut aug: Vec<Vec<f64>> = a
        .iter()
        .map(|row| {
            let mut r = row.clone();
            r.push(1.0);
            r
        })
        .collect();
    for col in 0..m {
        let pivot = (col..m).max_by(|&i, &j| aug[i][col].abs().total_cmp(&aug[j][col].abs()))?;
        if aug[pivot][col].abs() < 1e-12 {
            return None;
        }
        aug.swap(col, pivot);
        let pivot_row = aug[col].clone();
        for (row, r) in aug.iter_mut().enumerate() {
            if row != col {
                let factor = r[col] / pivot_row[col];
                for (v, p) in r.iter_mut().zip(&pivot_row).skip(col) {
                    *v -= factor * p;
                }
            }
        }
    }
    let x: Vec<f64> = (0..m).map(|i| aug[i][m] / aug[i][i]).collect();
    // residual check
    let ok = a.iter().all(|row| {
        let dot: f64 = row.iter().zip(&x).map(|(r, v)| r * v).sum();
        (dot - 1.0).abs() < 1e-8
    });
    if ok && x.iter().all(|v| v.is_finite()) {
        Some(x)
    } else {
        None
    }
}

/// Nearest reference direction (by perpendicular distance) of a normalized
/// point.
fn associate(point: &[f64], dirs: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (d, w) in dirs.iter().enumerate() {
        let norm2: f64 = w.iter().map(|v| v * v).sum();
        let proj: f64 = point.iter().zip(w).map(|(p, v)| p * v).sum::<f64>() / norm2;
        let dist2: f64 = point
            .iter()
            .zip(w)
            .map(|(p, v)| {
                let r = p - proj * v;
                r * r
            })
            .sum();
        let dist = dist2.sqrt();
        if dist < best.1 {
            best = (d, dist);
        }
    }
    best
}

/// Selects `n_keep` of `objs` by rank then niche preservation.
///
/// Returns the chosen indices (in selection order) with their niche info.
pub fn survive<R: Rng>(
    objs: &[Vec<f64>],
    n_keep: usize,
    dirs: &[Vec<f64>],
    normalizer: &mut Normalizer,
    rng: &mut R,
) -> Vec<(usize, NicheInfo)> {
    let fronts = non_dominated_fronts(objs);
    let mut rank = vec![0usize; objs.len()];
    for (r, f) in fronts.iter().enumerate() {
        for &i in f {
            rank[i] = r;
        }
    }
    let mut survivors: Vec<usize> = Vec::new();
    let mut last_front: &[usize] = &[];
    for f in &fronts {
        last_front = f;
        survivors.extend_from_slice(f);
        if survivors.len() >= n_keep {
            break;
        }
    }

    let nadir = normalizer.update(objs, &fronts[0], &survivors);
    let ideal = normalizer.ideal.clone();
    let denom: Vec<f64> = nadir
        .iter()
        .zip(&ideal)
        .map(|(n, z)| if n - z > 0.0 { n - z } else { 1e-10 })
        .collect();
    let mut info = vec![
        NicheInfo {
            rank: 0,
            niche: 0,
            distance: 0.0
        };
        objs.len()
    ];
    for &i in &survivors {
        let p: Vec<f64> = objs[i]
            .iter()
            .zip(&ideal)
            .zip(&denom)
            .map(|((v, z), d)| (v - z) / d)
            .collect();
        let (niche, distance) = associate(&p, dirs);
        info[i] = NicheInfo {
            rank: rank[i],
            niche,
            distance,
        };
    }

    if survivors.len() == n_keep {
        return survivors.into_iter().map(|i| (i, info[i])).collect();
    }

    let last_set: std::collections::HashSet<usize> = last_front.iter().copied().collect();
    let mut chosen: Vec<usize> = survivors.iter().copied().filter(|i| !last_set.contains(i)).collect();
    let mut niche_count = vec![0usize; dirs.len()];
    for &i in &chosen {
        niche_count[info[i].niche] += 1;
    }
    let mut available: Vec<usize> = last_front.to_vec();
    let mut remaining = n_keep - chosen.len();
    while remaining > 0 {
        let mut niches: Vec<usize> = available.iter().map(|&i| info[i].niche).collect();
        niches.sort_unstable();
        niches.dedup();
        let min_count = niches.iter().map(|&d| niche_count[d]).min().unwrap_or(0);
        let mut next: Vec<usize> = niches.into_iter().filter(|&d| niche_count[d] == min_count).collect();
        next.shuffle(rng);
        next.truncate(remaining);
        for d in next {
            let mut members: Vec<usize> = available.iter().copied().filter(|&i| info[i].niche == d).collect();
            members.shuffle(rng);
            let pick = if niche_count[d] == 0 {
                *members
                    .iter()
                    .min_by(|&&a, &&b| info[a].distance.total_cmp(&info[b].distance))
                    .expect("niche has members")
            } else {
                members[0]
            };
            available.retain(|&i| i != pick);
            chosen.push(pick);
            niche_count[d] += 1;
            remaining -= 1;
        }
    }
    chosen.into_iter().map(|i| (i, info[i])).collect()
}

/// Binary tournament: within a niche the better rank, then the closer
/// individual wins; across niches the winner is random.
pub fn niche_tournament<R: Rng>(info: &[NicheInfo], rng: &mut R) -> usize {
    let a = rng.random_range(0..info.len());
    let b = rng.random_range(0..info.len());
    let (ia, ib) = (info[a], info[b]);
    if ia.niche == ib.niche {
        if ia.rank != ib.rank {
            return if ia.rank < ib.rank { a } else { b };
        }
        if ia.distance != ib.distance {
            return if ia.distance < ib.distance { a } else { b };
        }
    }
    if rng.random_bool(0.5) {
        a
    } else {
        b
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn das_dennis_counts() {
        assert_eq!(das_dennis(2, 4).len(), 5);
        assert_eq!(das_dennis(3, 4).len(), 15);
        assert_eq!(das_dennis(4, 9).len(), 220);
        for d in das_dennis(3, 5) {
            assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert_eq!(default_partitions(4, 200), 9);
        assert_eq!(default_partitions(2, 200), 199);
        assert_eq!(binomial(12, 3), 220);
    }

    #[test]
    fn survival_keeps_first_front() {
        let objs = vec![
            vec![0.0, 1.0],
            vec![1.0, 0.0],
            vec![0.5, 0.5],
            vec![0.9, 0.9],
            vec![1.0, 1.0],
        ];
        let dirs = das_dennis(2, 4);
        let mut norm = Normalizer::new(2);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let kept = survive(&objs, 3, &dirs, &mut norm, &mut rng);
        let mut idx: Vec<usize> = kept.iter().map(|k| k.0).collect();
        idx.sort();
        assert_eq!(idx, vec![0, 1, 2]);
        let kept = survive(&objs, 4, &dirs, &mut norm, &mut rng);
        assert!(kept.iter().any(|k| k.0 == 3));
        assert_eq!(kept.len(), 4);
    }

    #[test]
    fn niching_spreads_over_directions() {
        // a single front of 6 points, 3 near each extreme, keep 2
        let objs = vec![
            vec![0.0, 1.0],
            vec![0.01, 0.99],
            vec![0.02, 0.98],
            vec![0.98, 0.02],
            vec![0.99, 0.01],
            vec![1.0, 0.0],
        ];
        let dirs = das_dennis(2, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let kept = survive(&objs, 2, &dirs, &mut Normalizer::new(2), &mut rng);
        let left = kept.iter().filter(|k| k.0 < 3).count();
        assert_eq!(left, 1);
    }

    #[test]
    fn hyperplane_solution() {
        let x = solve_hyperplane(&[vec![2.0, 0.0], vec![0.0, 4.0]]).unwrap();
        assert_eq!(x, vec![0.5, 0.25]);
        assert!(solve_hyperplane(&[vec![1.0, 1.0], vec![1.0, 1.0]]).is_none());
    }
}
