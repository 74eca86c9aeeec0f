//! Empirical tail-risk kernel: VaR, expected shortfall, marginal expected
//! shortfall, risk concentration/diversification, member shares and
//! tail-loss correlations.
//!
//! The conditioning event "loss at or above VaR" is realized on a finite
//! sample as the `k` largest years, ties broken toward the smaller year
//! index. With that convention the pool ES is exactly the sum of member MES
//! values, since both average the same `k` rows.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss_data::AnnualLossMatrix;

/// Neumaier-compensated sum.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Threshold probability `alpha`; the tail count is derived per series
/// length as `ceil((1 - alpha) * N)`, clamped to `[1, N]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailSpec {
    alpha: f64,
}

impl TailSpec {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidAlpha(alpha));
        }
        Ok(Self { alpha })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Tail count for a series of `n` years.
    ///
    /// `(1 - alpha) * n` is snapped to the nearest integer when it is within
    /// 1e-9 of it, so `alpha = 0.995, n = 10000` yields 50 rather than 51.
    pub fn tail_count(&self, n: usize) -> usize {
        if n == 0 {
            return 0;
        }
        let x = (1.0 - self.alpha) * n as f64;
        let nearest = x.round();
        let k = if (x - nearest).abs() <= 1e-9 * nearest.max(1.0) {
            nearest
        } else {
            x.ceil()
        };
        (k as usize).clamp(1, n)
    }
}

impl Default for TailSpec {
    fn default() -> Self {
        Self { alpha: 0.995 }
    }
}

fn check_k(k: usize, n: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::EmptyTail);
    }
    if k > n {
        return Err(Error::TailTooLong { k, n });
    }
    Ok(())
}

/// Indices of the `k` largest values, ties toward the smaller index, sorted
/// ascending. Caller guarantees `1 <= k <= len`.
fn top_k(series: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..series.len()).collect();
    if k < idx.len() {
        idx.select_nth_unstable_by(k - 1, |&a, &b| series[b].total_cmp(&series[a]).then(a.cmp(&b)));
        idx.truncate(k);
    }
    idx.sort_unstable();
    idx
}

fn mean_over(series: &[f64], idx: &[usize]) -> f64 {
    compensated_sum(idx.iter().map(|&t| series[t])) / idx.len() as f64
}

/// Indices of the `k` largest years, ascending.
pub fn tail_years(losses: &[f64], k: usize) -> Result<Vec<usize>> {
    check_k(k, losses.len())?;
    Ok(top_k(losses, k))
}

/// The `k`-th largest value.
pub fn var_k(losses: &[f64], k: usize) -> Result<f64> {
    let tail = tail_years(losses, k)?;
    Ok(tail.iter().map(|&t| losses[t]).fold(f64::INFINITY, f64::min))
}

/// Mean of the `k` largest values.
pub fn es_k(losses: &[f64], k: usize) -> Result<f64> {
    let tail = tail_years(losses, k)?;
    Ok(mean_over(losses, &tail))
}

pub fn var(losses: &[f64], spec: &TailSpec) -> Result<f64> {
    var_k(losses, spec.tail_count(losses.len()).max(1))
}

pub fn es(losses: &[f64], spec: &TailSpec) -> Result<f64> {
    es_k(losses, spec.tail_count(losses.len()).max(1))
}

/// Mean of a member's losses over the pool's tail years.
pub fn mes(member_losses: &[f64], pool_tail: &[usize]) -> Result<f64> {
    if pool_tail.is_empty() {
        return Err(Error::EmptyTail);
    }
    if let Some(&bad) = pool_tail.iter().find(|&&t| t >= member_losses.len()) {
        return Err(Error::TailIndexOutOfRange {
            index: bad,
            len: member_losses.len(),
        });
    }
    Ok(mean_over(member_losses, pool_tail))
}

/// Arithmetic mean, summed in index order with compensation.
pub fn mean(values: &[f64]) -> f64 {
    compensated_sum(values.iter().copied()) / values.len() as f64
}

/// Whether `mask` marks a valid top-`k` year set of `series`: every marked
/// value is at least every unmarked value.
fn is_top_set(series: &[f64], mask: &[bool]) -> bool {
    let mut min_in = f64::INFINITY;
    let mut max_out = f64::NEG_INFINITY;
    for (&v, &m) in series.iter().zip(mask) {
        if m {
            min_in = min_in.min(v);
        } else {
            max_out = max_out.max(v);
        }
    }
    min_in >= max_out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolMetrics {
    pub var: f64,
    pub es: f64,
    pub rc: f64,
    pub rd: f64,
    pub tail_years: Vec<usize>,
    /// Set when no member has positive standalone ES; rc is then 1 by
    /// convention.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberMetrics {
    pub iso3: String,
    pub mes: f64,
    pub es_individual: f64,
    pub share: f64,
    /// Standalone ES is zero: the member is left out of RC and its share is
    /// reported as 0.
    pub zero_es: bool,
}

/// Precomputed standalone tail statistics for every column of a matrix.
///
/// Shared by [`pool_metrics`] and the optimizer so both produce bit-identical
/// concentrations.
#[derive(Debug, Clone)]
pub struct TailKernel<'a> {
    matrix: &'a AnnualLossMatrix,
    k: usize,
    standalone_es: Vec<f64>,
}

impl<'a> TailKernel<'a> {
    pub fn new(matrix: &'a AnnualLossMatrix, spec: &TailSpec) -> Result<Self> {
        let k = spec.tail_count(matrix.n_years());
        check_k(k, matrix.n_years())?;
        let standalone_es = (0..matrix.n_countries())
            .map(|j| mean_over(matrix.column(j), &top_k(matrix.column(j), k)))
            .collect();
        Ok(Self {
            matrix,
            k,
            standalone_es,
        })
    }

    pub fn matrix(&self) -> &'a AnnualLossMatrix {
        self.matrix
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn standalone_es(&self, j: usize) -> f64 {
        self.standalone_es[j]
    }

    /// Row sums over `members`, compensated per row.
    pub fn pooled_series(&self, members: &[usize]) -> Vec<f64> {
        let n = self.matrix.n_years();
        let mut sum = vec![0.0f64; n];
        let mut comp = vec![0.0f64; n];
        for &j in members {
            for ((s, c), &v) in sum.iter_mut().zip(comp.iter_mut()).zip(self.matrix.column(j)) {
                let t = *s + v;
                if s.abs() >= v.abs() {
                    *c += (*s - t) + v;
                } else {
                    *c += (v - t) + *s;
                }
                *s = t;
            }
        }
        sum.iter().zip(&comp).map(|(s, c)| s + c).collect()
    }

    fn validate_members(&self, members: &[usize]) -> Result<()> {
        if members.is_empty() {
            return Err(Error::EmptyMembers);
        }
        let mut seen = vec![false; self.matrix.n_countries()];
        for &j in members {
            if j >= seen.len() {
                return Err(Error::UnknownCountry(format!("column {j}")));
            }
            if std::mem::replace(&mut seen[j], true) {
                return Err(Error::Shape(format!(
                    "member {} listed twice",
                    self.matrix.countries()[j]
                )));
            }
        }
        Ok(())
    }

    /// Risk concentration of a nonempty, duplicate-free member set.
    ///
    /// Returns `(rc, degenerate)`. The hot path of the optimizer.
    pub fn risk_concentration(&self, members: &[usize]) -> (f64, bool) {
        debug_assert!(!members.is_empty());
        let series = self.pooled_series(members);
        let tail = top_k(&series, self.k);
        let pool_es = mean_over(&series, &tail);
        self.concentration_from_tail(members, pool_es, &tail)
    }

    fn concentration_from_tail(&self, members: &[usize], pool_es: f64, tail: &[usize]) -> (f64, bool) {
        let denom = compensated_sum(members.iter().map(|&j| self.standalone_es[j]).filter(|&e| e > 0.0));
        if denom <= 0.0 {
            return (1.0, true);
        }
        let mut mask = vec![false; self.matrix.n_years()];
        for &t in tail {
            mask[t] = true;
        }
        let all_top = members
            .iter()
            .filter(|&&j| self.standalone_es[j] > 0.0)
            .all(|&j| is_top_set(self.matrix.column(j), &mask));
        if all_top {
            (1.0, false)
        } else {
            ((pool_es / denom).min(1.0), false)
        }
    }

    /// Full pool and per-member metrics for a member set given as column
    /// indices.
    pub fn pool_metrics(&self, members: &[usize]) -> Result<(PoolMetrics, Vec<MemberMetrics>)> {
        self.validate_members(members)?;
        let series = self.pooled_series(members);
        let tail = top_k(&series, self.k);
        let pool_es = mean_over(&series, &tail);
        let pool_var = tail.iter().map(|&t| series[t]).fold(f64::INFINITY, f64::min);
        let (rc, degenerate) = self.concentration_from_tail(members, pool_es, &tail);

        let mut mask = vec![false; self.matrix.n_years()];
        for &t in &tail {
            mask[t] = true;
        }
        let member_metrics = members
            .iter()
            .map(|&j| {
                let col = self.matrix.column(j);
                let es_individual = self.standalone_es[j];
                let zero_es = es_individual <= 0.0;
                let (mes, share) = if zero_es {
                    log::warn!(
                        "member {} has zero standalone ES; share reported as 0",
                        self.matrix.countries()[j]
                    );
                    (mean_over(col, &tail), 0.0)
                } else if is_top_set(col, &mask) {
                    // pool tail is also the member's own tail
                    (es_individual, 1.0)
                } else {
                    let mes = mean_over(col, &tail);
                    (mes, (mes / es_individual).min(1.0))
                };
                MemberMetrics {
                    iso3: self.matrix.countries()[j].clone(),
                    mes,
                    es_individual,
                    share,
                    zero_es,
                }
            })
            .collect();
        Ok((
            PoolMetrics {
                var: pool_var,
                es: pool_es,
                rc,
                rd: 1.0 - rc,
                tail_years: tail,
                degenerate,
            },
            member_metrics,
        ))
    }
}

/// Pool and member metrics for the columns `members` of `matrix`.
pub fn pool_metrics(
    matrix: &AnnualLossMatrix,
    members: &[usize],
    spec: &TailSpec,
) -> Result<(PoolMetrics, Vec<MemberMetrics>)> {
    TailKernel::new(matrix, spec)?.pool_metrics(members)
}

/// [`pool_metrics`] with members named by iso3 code.
pub fn pool_metrics_by_code<S: AsRef<str>>(
    matrix: &AnnualLossMatrix,
    members: &[S],
    spec: &TailSpec,
) -> Result<(PoolMetrics, Vec<MemberMetrics>)> {
    let idx = matrix.indices_of(members)?;
    pool_metrics(matrix, &idx, spec)
}

/// How a pair of countries is conditioned on tail years before computing
/// Pearson correlation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairPolicy {
    /// Each series keeps its values in its own `k` largest years and is zero
    /// elsewhere; correlation is taken over all years.
    #[default]
    OwnTailCensored,
    /// Raw values over the union of both countries' tail years.
    UnionTail,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TailCorrelation {
    pub countries: Vec<String>,
    /// Row-major n x n, symmetric, unit diagonal.
    pub values: Vec<Vec<f64>>,
    /// Off-diagonal pairs `(i, j)`, `i < j`, reported as 0 because a
    /// conditioned series had zero variance or too few years.
    pub flagged: Vec<(usize, usize)>,
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let mx = mean(x);
    let my = mean(y);
    let sxy = compensated_sum(x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)));
    let sxx = compensated_sum(x.iter().map(|a| (a - mx) * (a - mx)));
    let syy = compensated_sum(y.iter().map(|b| (b - my) * (b - my)));
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Pairwise Pearson correlation of tail-conditioned country series.
pub fn tail_correlation(matrix: &AnnualLossMatrix, spec: &TailSpec, policy: PairPolicy) -> Result<TailCorrelation> {
    let n_years = matrix.n_years();
    let k = spec.tail_count(n_years);
    check_k(k, n_years)?;
    let n = matrix.n_countries();
    let tails: Vec<Vec<usize>> = (0..n).map(|j| top_k(matrix.column(j), k)).collect();
    let mut values = vec![vec![0.0; n]; n];
    let mut flagged = Vec::new();

    let censored: Vec<Vec<f64>> = match policy {
        PairPolicy::OwnTailCensored => (0..n)
            .map(|j| {
                let col = matrix.column(j);
                let mut out = vec![0.0; n_years];
                for &t in &tails[j] {
                    out[t] = col[t];
                }
                out
            })
            .collect(),
        PairPolicy::UnionTail => Vec::new(),
    };

    for i in 0..n {
        values[i][i] = 1.0;
        for j in (i + 1)..n {
            let r = match policy {
                PairPolicy::OwnTailCensored => pearson(&censored[i], &censored[j]),
                PairPolicy::UnionTail => {
                    let mut years: Vec<usize> = tails[i].iter().chain(&tails[j]).copied().collect();
                    years.sort_unstable();
                    years.dedup();
                    if years.len() < 2 {
                        None
                    } else {
                        let x: Vec<f64> = years.iter().map(|&t| matrix.value(t, i)).collect();
                        let y: Vec<f64> = years.iter().map(|&t| matrix.value(t, j)).collect();
                        pearson(&x, &y)
                    }
                }
            };
            let r = r.unwrap_or_else(|| {
                log::warn!(
                    "tail correlation {}/{} undefined; reported as 0",
                    matrix.countries()[i],
                    matrix.countries()[j]
                );
                flagged.push((i, j));
                0.0
            });
            values[i][j] = r;
            values[j][i] = r;
        }
    }
    Ok(TailCorrelation {
        countries: matrix.countries().to_vec(),
        values,
        flagged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(cols: &[&[f64]]) -> AnnualLossMatrix {
        let n_years = cols[0].len();
        let names = ["AAA", "BBB", "CCC", "DDD", "EEE"];
        AnnualLossMatrix::from_columns(
            (1..=n_years as i64).collect(),
            names[..cols.len()].iter().map(|s| s.to_string()).collect(),
            cols.iter().map(|c| c.to_vec()).collect(),
        )
        .unwrap()
    }

    #[test]
    fn tail_count_rounding() {
        assert_eq!(TailSpec::new(0.995).unwrap().tail_count(10_000), 50);
        assert_eq!(TailSpec::new(0.95).unwrap().tail_count(200), 10);
        assert_eq!(TailSpec::new(0.9).unwrap().tail_count(25), 3);
        assert_eq!(TailSpec::new(0.995).unwrap().tail_count(10), 1);
        assert_eq!(TailSpec::new(0.995).unwrap().tail_count(2000), 10);
        assert!(TailSpec::new(1.0).is_err());
        assert!(TailSpec::new(0.0).is_err());
        assert!(TailSpec::new(f64::NAN).is_err());
    }

    #[test]
    fn var_and_es_examples() {
        let xs: Vec<f64> = (1..=10).map(f64::from).collect();
        assert_eq!(var_k(&xs, 2).unwrap(), 9.0);
        assert_eq!(es_k(&xs, 2).unwrap(), 9.5);
        assert_eq!(var_k(&[4.0; 7], 3).unwrap(), 4.0);
        assert_eq!(es_k(&[4.0; 7], 3).unwrap(), 4.0);
        assert_eq!(var_k(&[10.0, 0.0, 0.0, 0.0], 1).unwrap(), 10.0);
        assert_eq!(es_k(&[10.0, 0.0, 0.0, 0.0], 1).unwrap(), 10.0);
        assert!(matches!(var_k(&xs, 11), Err(Error::TailTooLong { k: 11, n: 10 })));
        assert!(matches!(es_k(&xs, 0), Err(Error::EmptyTail)));
        // alpha = 0.8 over 10 years gives k = 2
        let spec = TailSpec::new(0.8).unwrap();
        assert_eq!(var(&xs, &spec).unwrap(), 9.0);
        assert_eq!(es(&xs, &spec).unwrap(), 9.5);
    }

    #[test]
    fn tail_year_tie_breaks() {
        assert_eq!(tail_years(&[10.0, 10.0, 0.0, 0.0], 1).unwrap(), vec![0]);
        assert_eq!(tail_years(&[1.0, 2.0, 3.0, 4.0], 2).unwrap(), vec![2, 3]);
        assert_eq!(tail_years(&[5.0, 5.0, 5.0], 2).unwrap(), vec![0, 1]);
        assert!(tail_years(&[1.0], 2).is_err());
    }

    #[test]
    fn mes_examples() {
        assert_eq!(mes(&[10.0, 0.0, 0.0, 0.0], &[0]).unwrap(), 10.0);
        assert_eq!(mes(&[0.0, 10.0, 0.0, 0.0], &[0]).unwrap(), 0.0);
        assert!(matches!(mes(&[1.0], &[]), Err(Error::EmptyTail)));
        assert!(matches!(
            mes(&[1.0], &[3]),
            Err(Error::TailIndexOutOfRange { index: 3, len: 1 })
        ));
        let xs = [3.0, 9.0, 1.0, 7.0];
        let tail = tail_years(&xs, 2).unwrap();
        assert_eq!(mes(&xs, &tail).unwrap(), es_k(&xs, 2).unwrap());
    }

    #[test]
    fn es_of_full_tail_is_mean() {
        let xs = [0.1, 0.7, 1e9, 3.3, 0.0];
        assert_eq!(es_k(&xs, xs.len()).unwrap(), mean(&xs));
    }

    /// Brute-force oracle: every single-year tail choice for the pooled series
    /// of the disjoint-tail fixture, keeping the one the tie rule selects.
    #[test]
    fn disjoint_tail_fixture_against_enumeration() {
        let l1 = [10.0, 0.0, 0.0, 0.0];
        let l2 = [0.0, 10.0, 0.0, 0.0];
        let pool: Vec<f64> = l1.iter().zip(&l2).map(|(a, b)| a + b).collect();
        let max = pool.iter().cloned().fold(f64::MIN, f64::max);
        let chosen = (0..4).find(|&t| pool[t] == max).unwrap();
        let oracle_rc = (l1[chosen] + l2[chosen]) / (10.0 + 10.0);

        let m = matrix(&[&l1, &l2]);
        let spec = TailSpec::new(0.75).unwrap();
        assert_eq!(spec.tail_count(4), 1);
        let (p, members) = pool_metrics(&m, &[0, 1], &spec).unwrap();
        assert_eq!(p.tail_years, vec![chosen]);
        assert_eq!(p.es, 10.0);
        assert_eq!(p.var, 10.0);
        assert_eq!(p.rc, oracle_rc);
        assert_eq!(p.rc, 0.5);
        assert_eq!(p.rd, 0.5);
        assert_eq!(members[0].share, 1.0);
        assert_eq!(members[1].share, 0.0);
        assert_eq!(members[0].es_individual + members[1].es_individual, 20.0);
    }

    #[test]
    fn comonotone_and_singleton_pools() {
        let l1 = [3.0, 1.0, 7.0, 2.0, 5.5, 0.3];
        let l2: Vec<f64> = l1.iter().map(|v| 2.0 * v).collect();
        let m = matrix(&[&l1, &l2]);
        for alpha in [0.5, 0.7, 0.9] {
            let spec = TailSpec::new(alpha).unwrap();
            let (p, members) = pool_metrics(&m, &[0, 1], &spec).unwrap();
            assert_eq!(p.rc, 1.0);
            assert_eq!(p.rd, 0.0);
            assert!(members.iter().all(|mm| mm.share == 1.0));
            let (p, members) = pool_metrics(&m, &[1], &spec).unwrap();
            assert_eq!((p.rc, p.rd, members[0].share), (1.0, 0.0, 1.0));
        }
    }

    #[test]
    fn zero_es_member_is_excluded() {
        let m = matrix(&[&[10.0, 0.0, 0.0, 0.0], &[0.0, 10.0, 0.0, 0.0], &[0.0; 4]]);
        let spec = TailSpec::new(0.75).unwrap();
        let (p, members) = pool_metrics(&m, &[0, 1, 2], &spec).unwrap();
        assert_eq!(p.rc, 0.5);
        assert!(members[2].zero_es);
        assert_eq!(members[2].share, 0.0);
        let (p, _) = pool_metrics(&m, &[2], &spec).unwrap();
        assert!(p.degenerate);
        assert_eq!(p.rc, 1.0);
    }

    #[test]
    fn pool_metrics_errors() {
        let m = matrix(&[&[1.0, 2.0]]);
        let spec = TailSpec::new(0.5).unwrap();
        assert!(matches!(pool_metrics(&m, &[], &spec), Err(Error::EmptyMembers)));
        assert!(pool_metrics(&m, &[3], &spec).is_err());
        assert!(pool_metrics(&m, &[0, 0], &spec).is_err());
        assert!(matches!(
            pool_metrics_by_code(&m, &["ZZZ"], &spec),
            Err(Error::UnknownCountry(_))
        ));
    }

    #[test]
    fn tail_correlation_examples() {
        let spec = TailSpec::new(0.75).unwrap();
        let m = matrix(&[&[10.0, 0.0, 0.0, 0.0], &[0.0, 10.0, 0.0, 0.0]]);
        let c = tail_correlation(&m, &spec, PairPolicy::OwnTailCensored).unwrap();
        assert!((c.values[0][1] + 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(c.values[0][1], c.values[1][0]);
        assert_eq!(c.values[0][0], 1.0);

        let l1 = [1.0, 4.0, 2.0, 8.0, 3.0, 6.0, 5.0, 7.0];
        let l2: Vec<f64> = l1.iter().map(|v| 2.0 * v).collect();
        let m = matrix(&[&l1, &l2]);
        let spec = TailSpec::new(0.75).unwrap();
        for policy in [PairPolicy::OwnTailCensored, PairPolicy::UnionTail] {
            let c = tail_correlation(&m, &spec, policy).unwrap();
            assert!((c.values[0][1] - 1.0).abs() < 1e-12);
            assert!(c.flagged.is_empty());
        }
    }

    #[test]
    fn tail_correlation_flags_zero_variance() {
        let m = matrix(&[&[1.0, 2.0, 3.0, 4.0], &[0.0; 4]]);
        let spec = TailSpec::new(0.5).unwrap();
        let c = tail_correlation(&m, &spec, PairPolicy::OwnTailCensored).unwrap();
        assert_eq!(c.values[0][1], 0.0);
        assert_eq!(c.flagged, vec![(0, 1)]);
        // union of two single-year tails in the same year
        let m = matrix(&[&[5.0, 0.0, 0.0, 0.0], &[3.0, 0.0, 0.0, 0.0]]);
        let spec = TailSpec::new(0.75).unwrap();
        let c = tail_correlation(&m, &spec, PairPolicy::UnionTail).unwrap();
        assert_eq!(c.flagged, vec![(0, 1)]);
    }

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let v = [1e16, 1.0, -1e16, 1.0];
        assert_eq!(compensated_sum(v), 2.0);
    }
}
