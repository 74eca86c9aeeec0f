use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::config::{ExpansionScope, PoolDefinition, RunConfig};
use super::manifest::{file_digest, RunManifest};
use super::output::{self, num, PoolSummary, Table};
use crate::error::{Error, Result};
use crate::loss_data::{load_annual_losses, load_country_meta, load_event_catalogue, write_annual_losses};
use crate::loss_data::{AnnualLossMatrix, CountryMeta};
use crate::pool_opt::{
    optimize_step1_problem, optimize_step2_with_required, AllocationVector, ConvergenceRecord, OptimizerConfig,
    PoolProblem, Step2Outcome,
};
use crate::scenario_gen::{classify_year_types, count_moments, load_season_labels, simulate, YearType, YearTypeModel};
use crate::tail_metrics::{tail_correlation, MemberMetrics, TailKernel, TailSpec};

/// Files written by a command plus its manifest.
#[derive(Debug, Clone)]
pub struct CommandOutput {
    pub files: Vec<PathBuf>,
    pub manifest: RunManifest,
    pub manifest_path: PathBuf,
}

struct Run {
    cfg: RunConfig,
    manifest: RunManifest,
    files: Vec<PathBuf>,
    out: PathBuf,
    clock: Instant,
}

impl Run {
    fn start(cfg: &RunConfig, command: &str) -> Result<Self> {
        cfg.validate()?;
        let out = cfg.output_dir();
        std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
        Ok(Self {
            cfg: cfg.clone(),
            manifest: RunManifest::new(command, cfg.digest()),
            files: Vec::new(),
            out,
            clock: Instant::now(),
        })
    }

    fn lap(&mut self, stage: &str) {
        let ms = self.clock.elapsed().as_secs_f64() * 1e3;
        self.manifest.timings_ms.insert(stage.to_string(), ms);
        self.clock = Instant::now();
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn text(&mut self, name: &str, text: &str) -> Result<()> {
        let p = output::write_text(&self.path(name), text)?;
        self.files.push(p);
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let p = output::write_json(&self.path(name), value)?;
        self.files.push(p);
        Ok(())
    }

    fn matrix(&mut self) -> Result<AnnualLossMatrix> {
        let path = self.cfg.annual_losses_path();
        let m = load_annual_losses(&path)?;
        self.manifest.add_input(&path)?;
        Ok(m)
    }

    fn meta(&mut self) -> Result<Vec<CountryMeta>> {
        match self.cfg.inputs.country_meta.clone() {
            Some(p) => {
                let path = self.cfg.resolve(&p);
                let meta = load_country_meta(&path)?;
                self.manifest.add_input(&path)?;
                Ok(meta)
            }
            None => Ok(Vec::new()),
        }
    }

    fn optimizer_seeds(&mut self) {
        let o = &self.cfg.optimizer;
        self.manifest.rng_seeds = (0..o.seeds).map(|r| o.run_seed(r)).collect();
    }

    fn finish(mut self, manifest_name: &str) -> Result<CommandOutput> {
        for f in &self.files {
            let name = f
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default();
            self.manifest.output_digests.insert(name, file_digest(f)?);
        }
        let manifest_path = self.path(manifest_name);
        self.manifest.write(&manifest_path)?;
        Ok(CommandOutput {
            files: self.files,
            manifest: self.manifest,
            manifest_path,
        })
    }
}

fn regions_by_code(meta: &[CountryMeta]) -> HashMap<&str, &str> {
    meta.iter().map(|c| (c.iso3.as_str(), c.region.as_str())).collect()
}

fn codes(matrix: &AnnualLossMatrix, idx: &[usize]) -> Vec<String> {
    idx.iter().map(|&j| matrix.countries()[j].clone()).collect()
}

fn pinned_indices(matrix: &AnnualLossMatrix, pool: &PoolDefinition) -> Result<Vec<usize>> {
    let mut idx = matrix.indices_of(&pool.pinned_members)?;
    idx.sort_unstable();
    idx.dedup();
    Ok(idx)
}

/// Outcome of optimizing one pool on its own.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionalResult {
    pub pool: String,
    pub region: Option<String>,
    pub candidates: Vec<String>,
    pub pinned: Vec<String>,
    /// Best concentration found by the first step.
    pub step1_rc: f64,
    pub step1_members: Vec<String>,
    /// Target of the member-minimization step.
    pub rc_star: f64,
    pub improved_rc_star: bool,
    /// Smallest member set reaching `rc_star`.
    pub members: Vec<String>,
    pub metrics: PoolSummary,
    pub shares: Vec<MemberMetrics>,
    pub diagnostics: Vec<String>,
    /// (cardinality, rc) of the best feasible subset per generation.
    pub step2_trace: Vec<(usize, f64)>,
}

/// Single-pool optimum over `candidates` (matrix columns, ascending), with
/// `pinned` always in the pool.
pub fn regional_optimum(
    matrix: &AnnualLossMatrix,
    pool: &str,
    candidates: &[usize],
    pinned: &[usize],
    spec: &TailSpec,
    opt: &OptimizerConfig,
) -> Result<(RegionalResult, Vec<ConvergenceRecord>)> {
    if candidates.is_empty() {
        return Err(Error::EmptyRegion(pool.to_string()));
    }
    let mut diagnostics = Vec::new();
    if candidates.len() == 1 {
        let msg = format!("pool {pool} has a single candidate country; its diversification is 0");
        log::warn!("{msg}");
        diagnostics.push(msg);
    }
    let sub = matrix.select_columns(candidates)?;
    let allowed: Vec<Vec<usize>> = candidates
        .iter()
        .map(|j| if pinned.contains(j) { vec![1] } else { vec![0, 1] })
        .collect();
    let problem = PoolProblem::from_allowed(1, allowed)?;
    let step1 = optimize_step1_problem(&problem, &sub, spec, opt, &[])?;
    let best = step1
        .front
        .entries()
        .first()
        .ok_or_else(|| Error::Invariant(format!("empty front for pool {pool}")))?;
    let members_sub = best.allocation.members_of(1);
    if members_sub.is_empty() {
        return Err(Error::Invariant(format!("pool {pool}: best allocation is empty")));
    }
    let pinned_sub: Vec<usize> = (0..candidates.len())
        .filter(|i| pinned.contains(&candidates[*i]))
        .collect();
    let step2 = optimize_step2_with_required(&sub, &members_sub, &pinned_sub, best.objectives[0], spec, opt)?;
    diagnostics.extend(step2.diagnostics.iter().cloned());
    let members: Vec<usize> = step2.members.iter().map(|&i| candidates[i]).collect();
    let (pm, shares) = TailKernel::new(matrix, spec)?.pool_metrics(&members)?;
    let step1_members: Vec<usize> = members_sub.iter().map(|&i| candidates[i]).collect();
    Ok((
        RegionalResult {
            pool: pool.to_string(),
            region: None,
            candidates: codes(matrix, candidates),
            pinned: codes(matrix, pinned),
            step1_rc: best.objectives[0],
            step1_members: codes(matrix, &step1_members),
            rc_star: step2.rc_star,
            improved_rc_star: step2.improved_rc_star,
            members: codes(matrix, &members),
            metrics: PoolSummary::new(&pm, members.len()),
            shares,
            diagnostics,
            step2_trace: step2.trace,
        },
        step1.convergence,
    ))
}

/// Per-pool detail of one front configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfiguredPool {
    pub name: String,
    pub step1_members: Vec<String>,
    pub step1_rc: f64,
    /// Minimal member set; empty when the pool is empty.
    pub members: Vec<String>,
    pub rc_star: f64,
    pub improved_rc_star: bool,
    pub metrics: Option<PoolSummary>,
    pub shares: Vec<MemberMetrics>,
}

/// One entry of a multi-pool front.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Configuration {
    pub config_id: usize,
    pub allocation: AllocationVector,
    /// RC per pool from the first step.
    pub objectives: Vec<f64>,
    pub pools: Vec<ConfiguredPool>,
}

impl Configuration {
    pub fn rd(&self, pool: usize) -> f64 {
        1.0 - self.objectives[pool]
    }
}

/// Multi-pool front with the member-minimization step applied to every pool
/// of every entry.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiPoolResult {
    pub pools: Vec<String>,
    pub configurations: Vec<Configuration>,
    pub convergence: Vec<ConvergenceRecord>,
    /// Per pool, the id of the configuration with the highest RD (lowest id on
    /// ties).
    pub best_for: Vec<usize>,
    pub evaluations: usize,
}

pub fn multi_pool_front(
    matrix: &AnnualLossMatrix,
    pool_names: &[String],
    problem: &PoolProblem,
    required: &[Vec<usize>],
    spec: &TailSpec,
    opt: &OptimizerConfig,
) -> Result<MultiPoolResult> {
    let m = problem.m();
    if pool_names.len() != m || required.len() != m {
        return Err(Error::Shape(format!("{m} pools but {} names", pool_names.len())));
    }
    let step1 = optimize_step1_problem(problem, matrix, spec, opt, &[])?;
    let kernel = TailKernel::new(matrix, spec)?;
    let mut memo: HashMap<(Vec<usize>, Vec<usize>), Step2Outcome> = HashMap::new();
    let mut configurations = Vec::with_capacity(step1.front.len());
    for (id, entry) in step1.front.entries().iter().enumerate() {
        let mut pools = Vec::with_capacity(m);
        for (p, name) in pool_names.iter().enumerate() {
            let step1_members = entry.allocation.members_of(p + 1);
            let req: Vec<usize> = required[p]
                .iter()
                .copied()
                .filter(|j| step1_members.contains(j))
                .collect();
            let rc1 = entry.objectives[p];
            if step1_members.is_empty() {
                pools.push(ConfiguredPool {
                    name: name.clone(),
                    step1_members: Vec::new(),
                    step1_rc: rc1,
                    members: Vec::new(),
                    rc_star: rc1,
                    improved_rc_star: false,
                    metrics: None,
                    shares: Vec::new(),
                });
                continue;
            }
            let key = (step1_members.clone(), req.clone());
            let s2 = match memo.get(&key) {
                Some(s) => s.clone(),
                None => {
                    let s = optimize_step2_with_required(matrix, &step1_members, &req, rc1, spec, opt)?;
                    memo.insert(key, s.clone());
                    s
                }
            };
            let (pm, shares) = kernel.pool_metrics(&s2.members)?;
            pools.push(ConfiguredPool {
                name: name.clone(),
                step1_members: codes(matrix, &step1_members),
                step1_rc: rc1,
                members: codes(matrix, &s2.members),
                rc_star: s2.rc_star,
                improved_rc_star: s2.improved_rc_star,
                metrics: Some(PoolSummary::new(&pm, s2.members.len())),
                shares,
            });
        }
        configurations.push(Configuration {
            config_id: id,
            allocation: entry.allocation.clone(),
            objectives: entry.objectives.clone(),
            pools,
        });
    }
    let best_for = (0..m)
        .map(|p| {
            configurations
                .iter()
                .min_by(|a, b| {
                    a.objectives[p]
                        .total_cmp(&b.objectives[p])
                        .then(a.config_id.cmp(&b.config_id))
                })
                .map(|c| c.config_id)
                .ok_or_else(|| Error::Invariant("empty front".into()))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MultiPoolResult {
        pools: pool_names.to_vec(),
        configurations,
        convergence: step1.convergence,
        best_for,
        evaluations: step1.evaluations,
    })
}

/// `config_id, rc_<pool>..., rd_<pool>..., best_for_<pool>...`
pub fn pareto_front_table(res: &MultiPoolResult) -> Table {
    let mut header = vec!["config_id".to_string()];
    header.extend(res.pools.iter().map(|p| format!("rc_{p}")));
    header.extend(res.pools.iter().map(|p| format!("rd_{p}")));
    header.extend(res.pools.iter().map(|p| format!("best_for_{p}")));
    let mut t = Table::new(&header);
    for c in &res.configurations {
        let mut row = vec![c.config_id.to_string()];
        row.extend(c.objectives.iter().map(|&v| num(v)));
        row.extend((0..res.pools.len()).map(|p| num(c.rd(p))));
        row.extend(res.best_for.iter().map(|&b| (b == c.config_id).to_string()));
        t.push(&row);
    }
    t
}

fn write_multi_pool(run: &mut Run, res: &MultiPoolResult) -> Result<()> {
    run.text("pareto_front.csv", pareto_front_table(res).as_str())?;
    for c in &res.configurations {
        run.json(&format!("pools_{}.json", c.config_id), c)?;
    }
    let conv = output::convergence_table(&res.convergence, &res.pools);
    run.text("convergence_global.csv", conv.as_str())?;
    run.manifest.statistics = json!({
        "front_size": res.configurations.len(),
        "evaluations": res.evaluations,
    });
    Ok(())
}

fn region_candidates(
    matrix: &AnnualLossMatrix,
    meta: &[CountryMeta],
    pool: &PoolDefinition,
    pinned: &[usize],
) -> Result<Vec<usize>> {
    let Some(region) = &pool.region_filter else {
        return Ok((0..matrix.n_countries()).collect());
    };
    if meta.is_empty() {
        return Err(Error::InvalidConfig(format!(
            "pool {} filters on region {region} but no country metadata was given",
            pool.name
        )));
    }
    let regions = regions_by_code(meta);
    let mut idx: Vec<usize> = (0..matrix.n_countries())
        .filter(|&j| regions.get(matrix.countries()[j].as_str()) == Some(&region.as_str()) || pinned.contains(&j))
        .collect();
    idx.sort_unstable();
    Ok(idx)
}

/// Optimizes every configured pool independently over its region.
pub fn cmd_optimize_regional(cfg: &RunConfig) -> Result<CommandOutput> {
    let mut run = Run::start(cfg, "optimize-regional")?;
    let matrix = run.matrix()?;
    let meta = run.meta()?;
    let spec = cfg.tail_spec();
    run.optimizer_seeds();
    run.lap("load");
    if cfg.pools.is_empty() {
        return Err(Error::InvalidConfig("no pools configured".into()));
    }
    let mut summary = BTreeMap::new();
    for pool in &cfg.pools {
        let pinned = pinned_indices(&matrix, pool)?;
        let candidates = region_candidates(&matrix, &meta, pool, &pinned)?;
        let (mut res, conv) = regional_optimum(&matrix, &pool.name, &candidates, &pinned, &spec, &cfg.optimizer)?;
        res.region = pool.region_filter.clone();
        run.manifest.diagnostics.extend(res.diagnostics.iter().cloned());
        summary.insert(
            pool.name.clone(),
            json!({"rd": res.metrics.rd, "members": res.members.len()}),
        );
        run.json(&format!("optimal_pool_{}.json", pool.name), &res)?;
        let conv = output::convergence_table(&conv, std::slice::from_ref(&pool.name));
        run.text(&format!("convergence_{}.csv", pool.name), conv.as_str())?;
        run.lap(&pool.name);
    }
    run.manifest.statistics = json!(summary);
    run.finish("manifest_optimize-regional.json")
}

fn regional_result_path(cfg: &RunConfig, pool: &str) -> PathBuf {
    cfg.regional_results_dir().join(format!("optimal_pool_{pool}.json"))
}

fn read_regional(cfg: &RunConfig, pool: &str) -> Result<Option<RegionalResult>> {
    let path = regional_result_path(cfg, pool);
    if path.exists() {
        output::read_json(&path).map(Some)
    } else {
        Ok(None)
    }
}

/// Allowed pool sets when `pins[i]` fixes country `i`; free countries use
/// `free(i)`. Metadata pins and restrictions apply to countries without a
/// configured pin.
fn constrained_problem(
    matrix: &AnnualLossMatrix,
    meta: &[CountryMeta],
    m: usize,
    pins: &[Option<usize>],
    free: impl Fn(usize) -> Vec<usize>,
) -> Result<PoolProblem> {
    let by_code: HashMap<&str, &CountryMeta> = meta.iter().map(|c| (c.iso3.as_str(), c)).collect();
    let mut allowed = Vec::with_capacity(matrix.n_countries());
    for (j, iso3) in matrix.countries().iter().enumerate() {
        let set = match (pins[j], by_code.get(iso3.as_str())) {
            (Some(p), _) => vec![p],
            (None, Some(c)) if c.pinned_pool.is_some() => {
                let p = c.pinned_pool.unwrap_or_default();
                if p > m {
                    return Err(Error::Infeasible(format!(
                        "{iso3} pinned to pool {p} but only {m} pools exist"
                    )));
                }
                vec![p]
            }
            (None, Some(c)) if c.allowed_pools.is_some() => {
                let extra = c
                    .allowed_pools
                    .as_ref()
                    .map(|a| a.iter().copied().collect::<BTreeSet<_>>())
                    .unwrap_or_default();
                free(j).into_iter().filter(|p| *p == 0 || extra.contains(p)).collect()
            }
            _ => free(j),
        };
        allowed.push(set);
    }
    PoolProblem::from_allowed(m, allowed)
}

fn assign_pin(pins: &mut [Option<usize>], matrix: &AnnualLossMatrix, j: usize, pool: usize) -> Result<()> {
    match pins[j] {
        Some(p) if p != pool => Err(Error::InvalidConfig(format!(
            "{} is pinned to more than one pool",
            matrix.countries()[j]
        ))),
        _ => {
            pins[j] = Some(pool);
            Ok(())
        }
    }
}

/// All pools jointly: regional optimal members and configured pins are fixed,
/// every other country may join any one pool or none.
pub fn cmd_optimize_global(cfg: &RunConfig) -> Result<CommandOutput> {
    let mut run = Run::start(cfg, "optimize-global")?;
    let matrix = run.matrix()?;
    let meta = run.meta()?;
    let spec = cfg.tail_spec();
    run.optimizer_seeds();
    if cfg.pools.is_empty() {
        return Err(Error::InvalidConfig("no pools configured".into()));
    }
    let m = cfg.pools.len();
    let mut pins = vec![None; matrix.n_countries()];
    let mut required = vec![Vec::new(); m];
    for (p, pool) in cfg.pools.iter().enumerate() {
        let path = regional_result_path(cfg, &pool.name);
        let regional = read_regional(cfg, &pool.name)?.ok_or_else(|| Error::MissingRegionalResults {
            pool: pool.name.clone(),
            path: path.clone(),
        })?;
        run.manifest.add_input(&path)?;
        let mut idx = matrix.indices_of(&regional.members)?;
        idx.extend(pinned_indices(&matrix, pool)?);
        idx.sort_unstable();
        idx.dedup();
        for &j in &idx {
            assign_pin(&mut pins, &matrix, j, p + 1)?;
        }
        required[p] = pinned_indices(&matrix, pool)?;
    }
    let problem = constrained_problem(&matrix, &meta, m, &pins, |_| (0..=m).collect())?;
    run.lap("load");
    let names: Vec<String> = cfg.pools.iter().map(|p| p.name.clone()).collect();
    let res = multi_pool_front(&matrix, &names, &problem, &required, &spec, &cfg.optimizer)?;
    run.lap("optimize");
    write_multi_pool(&mut run, &res)?;
    run.finish("manifest_optimize-global.json")
}

/// Membership used by the metrics command: explicit members, else a regional
/// result, else the pinned members.
pub fn resolve_members(cfg: &RunConfig, pool: &PoolDefinition) -> Result<Vec<String>> {
    if let Some(m) = &pool.members {
        return Ok(m.clone());
    }
    if let Some(r) = read_regional(cfg, &pool.name)? {
        return Ok(r.members);
    }
    Ok(pool.pinned_members.clone())
}

fn metrics_tables(
    matrix: &AnnualLossMatrix,
    spec: &TailSpec,
    cfg: &RunConfig,
    pools: &[(String, Vec<String>)],
) -> Result<(Table, Table, Table)> {
    let kernel = TailKernel::new(matrix, spec)?;
    let mut pm_t = Table::new(&output::POOL_METRICS_HEADER);
    let mut sh_t = Table::new(&output::MEMBER_SHARES_HEADER);
    let mut co_t = Table::new(&output::CORRELATION_HEADER);
    for (name, members) in pools {
        if members.is_empty() {
            return Err(Error::InvalidConfig(format!("pool {name} has no members")));
        }
        let mut idx = Vec::with_capacity(members.len());
        for code in members {
            idx.push(
                matrix
                    .country_index(code)
                    .ok_or_else(|| Error::UnknownCountry(code.clone()))?,
            );
        }
        let (pm, shares) = kernel.pool_metrics(&idx)?;
        pm_t.push(&output::pool_metrics_row(name, &PoolSummary::new(&pm, idx.len())));
        for s in &shares {
            sh_t.push(&output::member_share_row(name, s));
        }
        let corr = tail_correlation(&matrix.select_columns(&idx)?, spec, cfg.pair_policy)?;
        output::push_correlation(&mut co_t, name, &corr);
    }
    Ok((pm_t, sh_t, co_t))
}

/// Pool metrics, member shares and tail correlations for fixed memberships.
pub fn cmd_metrics(cfg: &RunConfig) -> Result<CommandOutput> {
    let mut run = Run::start(cfg, "metrics")?;
    let matrix = run.matrix()?;
    let spec = cfg.tail_spec();
    run.lap("load");
    let mut pools = Vec::new();
    for pool in &cfg.pools {
        pools.push((pool.name.clone(), resolve_members(cfg, pool)?));
    }
    let (pm, sh, co) = metrics_tables(&matrix, &spec, cfg, &pools)?;
    run.text("pool_metrics.csv", pm.as_str())?;
    run.text("member_shares.csv", sh.as_str())?;
    run.text("tail_correlation.csv", co.as_str())?;
    run.lap("metrics");
    run.finish("manifest_metrics.json")
}

/// Regions a pool draws free agents from in a regional expansion: its region
/// filter, else the regions of its pinned members. `None` means any region.
fn expansion_regions(pool: &PoolDefinition, regions: &HashMap<&str, &str>) -> Option<BTreeSet<String>> {
    if let Some(r) = &pool.region_filter {
        return Some(BTreeSet::from([r.clone()]));
    }
    let set: BTreeSet<String> = pool
        .pinned_members
        .iter()
        .filter_map(|c| regions.get(c.as_str()).map(|r| r.to_string()))
        .collect();
    (!set.is_empty()).then_some(set)
}

/// Expansion of existing pools (their pinned members) under a scope.
pub fn expand_pools(
    matrix: &AnnualLossMatrix,
    meta: &[CountryMeta],
    pools: &[PoolDefinition],
    scope: ExpansionScope,
    spec: &TailSpec,
    opt: &OptimizerConfig,
) -> Result<MultiPoolResult> {
    let m = pools.len();
    let mut pins = vec![None; matrix.n_countries()];
    let mut required = Vec::with_capacity(m);
    for (p, pool) in pools.iter().enumerate() {
        let idx = pinned_indices(matrix, pool)?;
        for &j in &idx {
            assign_pin(&mut pins, matrix, j, p + 1)?;
        }
        required.push(idx);
    }
    let regions = regions_by_code(meta);
    let pool_regions: Vec<Option<BTreeSet<String>>> = pools.iter().map(|p| expansion_regions(p, &regions)).collect();
    let free = |j: usize| -> Vec<usize> {
        match scope {
            ExpansionScope::Global => (0..=m).collect(),
            ExpansionScope::Regional => {
                let region = regions.get(matrix.countries()[j].as_str());
                std::iter::once(0)
                    .chain((1..=m).filter(|&p| match (&pool_regions[p - 1], region) {
                        (None, _) => true,
                        (Some(set), Some(r)) => set.contains(*r),
                        (Some(_), None) => false,
                    }))
                    .collect()
            }
        }
    };
    let problem = constrained_problem(matrix, meta, m, &pins, free)?;
    let names: Vec<String> = pools.iter().map(|p| p.name.clone()).collect();
    multi_pool_front(matrix, &names, &problem, &required, spec, opt)
}

/// Metrics of the existing pools, then their expansion.
pub fn cmd_expand_existing(cfg: &RunConfig) -> Result<CommandOutput> {
    let mut run = Run::start(cfg, "expand-existing")?;
    let matrix = run.matrix()?;
    let meta = run.meta()?;
    let spec = cfg.tail_spec();
    run.optimizer_seeds();
    if cfg.pools.is_empty() {
        return Err(Error::InvalidConfig("no pools configured".into()));
    }
    run.lap("load");
    let kernel = TailKernel::new(&matrix, &spec)?;
    let mut original = Table::new(&output::POOL_METRICS_HEADER);
    for pool in &cfg.pools {
        let idx = pinned_indices(&matrix, pool)?;
        if idx.is_empty() {
            continue;
        }
        let (pm, _) = kernel.pool_metrics(&idx)?;
        original.push(&output::pool_metrics_row(&pool.name, &PoolSummary::new(&pm, idx.len())));
    }
    run.text("original_metrics.csv", original.as_str())?;
    let res = expand_pools(&matrix, &meta, &cfg.pools, cfg.expansion_scope, &spec, &cfg.optimizer)?;
    run.lap("optimize");
    write_multi_pool(&mut run, &res)?;
    run.finish("manifest_expand-existing.json")
}

/// Synthetic annual losses from the event catalogue.
pub fn cmd_sample(cfg: &RunConfig) -> Result<CommandOutput> {
    let mut run = Run::start(cfg, "sample")?;
    let sampler = cfg.sampler.clone().unwrap_or_default();
    let cat_path = cfg
        .inputs
        .event_catalogue
        .as_ref()
        .map(|p| cfg.resolve(p))
        .ok_or_else(|| Error::InvalidConfig("sample needs inputs.event_catalogue".into()))?;
    let catalogue = load_event_catalogue(&cat_path, sampler.window)?;
    run.manifest.add_input(&cat_path)?;
    let model = match cfg.inputs.season_labels.as_ref().map(|p| cfg.resolve(p)) {
        Some(path) => {
            let labels = load_season_labels(&path)?;
            run.manifest.add_input(&path)?;
            classify_year_types(&labels)?
        }
        None => YearTypeModel::uniform(sampler.window)?,
    };
    model.check_covers(sampler.window)?;
    run.manifest.rng_seeds = vec![sampler.rng_seed];
    run.lap("load");

    let sim = simulate(&catalogue, &model, &sampler)?;
    run.lap("simulate");
    let path = run.path("annual_losses.csv");
    write_annual_losses(&sim.matrix, &path)?;
    run.files.push(path);

    let n = sampler.n_years as f64;
    let (lambda, variance) = count_moments(&catalogue, &model, &sampler);
    let bound = 3.0 * (variance / n).sqrt();
    let mean = sim.mean_count();
    let within = (mean - lambda).abs() <= bound;
    if !within {
        let msg = format!("mean annual count {mean} is outside {lambda} +/- {bound}");
        log::warn!("{msg}");
        run.manifest.diagnostics.push(msg);
    }
    let mut shares = serde_json::Map::new();
    for ty in YearType::ALL {
        let p = model.frequency(ty);
        let observed = sim
            .historical_years
            .iter()
            .filter(|y| model.year_labels().get(y) == Some(&ty))
            .count() as f64
            / n;
        let b = 3.0 * (p * (1.0 - p) / n).sqrt();
        shares.insert(
            ty.name().to_string(),
            json!({"expected": p, "observed": observed, "bound_3sigma": b, "within": (observed - p).abs() <= b}),
        );
    }
    run.manifest.diagnostics.extend(sim.diagnostics.iter().cloned());
    run.manifest.statistics = json!({
        "n_years": sampler.n_years,
        "n_countries": sim.matrix.n_countries(),
        "mean_count": mean,
        "expected_count": lambda,
        "count_variance": variance,
        "count_bound_3sigma": bound,
        "mean_count_within_3sigma": within,
        "year_type_shares": shares,
    });
    run.finish("manifest.json")
}

/// Convenience for tests and tools: digests of a command's outputs keyed by
/// file name.
pub fn output_digests(files: &[PathBuf]) -> Result<BTreeMap<String, String>> {
    files
        .iter()
        .map(|f| {
            let name = f
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default();
            Ok((name, file_digest(Path::new(f))?))
        })
        .collect()
}
