//! Plot-ready tables and JSON records written by the commands.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pool_opt::ConvergenceRecord;
use crate::tail_metrics::{MemberMetrics, PoolMetrics, TailCorrelation};

/// Shortest representation that parses back to the same value.
pub fn num(x: f64) -> String {
    x.to_string()
}

/// Accumulates a CSV table with `\n` line endings.
#[derive(Debug, Clone)]
pub struct Table {
    text: String,
    width: usize,
}

impl Table {
    pub fn new<S: AsRef<str>>(header: &[S]) -> Self {
        let mut t = Table {
            text: String::new(),
            width: header.len(),
        };
        t.push(header);
        t
    }

    pub fn push<S: AsRef<str>>(&mut self, cells: &[S]) {
        assert_eq!(cells.len(), self.width, "row width");
        for (i, c) in cells.iter().enumerate() {
            if i > 0 {
                self.text.push(',');
            }
            self.text.push_str(c.as_ref());
        }
        self.text.push('\n');
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }
}

pub fn write_text(path: &Path, text: &str) -> Result<PathBuf> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))?;
    Ok(path.to_path_buf())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<PathBuf> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    text.push('\n');
    write_text(path, &text)
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}

/// Headline numbers of one pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolSummary {
    pub n_members: usize,
    pub var: f64,
    pub es: f64,
    pub rc: f64,
    pub rd: f64,
    pub degenerate: bool,
}

impl PoolSummary {
    pub fn new(m: &PoolMetrics, n_members: usize) -> Self {
        Self {
            n_members,
            var: m.var,
            es: m.es,
            rc: m.rc,
            rd: m.rd,
            degenerate: m.degenerate,
        }
    }
}

pub const POOL_METRICS_HEADER: [&str; 7] = ["pool", "n_members", "var", "es", "rc", "rd", "degenerate"];
pub const MEMBER_SHARES_HEADER: [&str; 6] = ["pool", "iso3", "mes", "es_individual", "share", "zero_es"];
pub const CORRELATION_HEADER: [&str; 5] = ["pool", "iso3_a", "iso3_b", "correlation", "flagged"];

pub fn pool_metrics_row(pool: &str, s: &PoolSummary) -> [String; 7] {
    [
        pool.to_string(),
        s.n_members.to_string(),
        num(s.var),
        num(s.es),
        num(s.rc),
        num(s.rd),
        s.degenerate.to_string(),
    ]
}

pub fn member_share_row(pool: &str, m: &MemberMetrics) -> [String; 6] {
    [
        pool.to_string(),
        m.iso3.clone(),
        num(m.mes),
        num(m.es_individual),
        num(m.share),
        m.zero_es.to_string(),
    ]
}

/// Every ordered pair, diagonal included, so the table pivots to the full
/// matrix.
pub fn push_correlation(table: &mut Table, pool: &str, c: &TailCorrelation) {
    for (i, a) in c.countries.iter().enumerate() {
        for (j, b) in c.countries.iter().enumerate() {
            let key = (i.min(j), i.max(j));
            let flagged = i != j && c.flagged.contains(&key);
            table.push(&[
                pool.to_string(),
                a.clone(),
                b.clone(),
                num(c.values[i][j]),
                flagged.to_string(),
            ]);
        }
    }
}

pub fn convergence_table(records: &[ConvergenceRecord], pools: &[String]) -> Table {
    let mut header = vec!["run".to_string(), "generation".to_string()];
    header.extend(pools.iter().map(|p| format!("best_rc_{p}")));
    let mut t = Table::new(&header);
    for r in records {
        let mut row = vec![r.run.to_string(), r.generation.to_string()];
        row.extend(r.best.iter().map(|&v| num(v)));
        t.push(&row);
    }
    t
}

/// One row of a member-share table read back from disk.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct MemberShareRow {
    pub pool: String,
    pub iso3: String,
    pub mes: f64,
    pub es_individual: f64,
    pub share: f64,
    pub zero_es: bool,
}

/// One row of a pool-metrics table read back from disk.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct PoolMetricsRow {
    pub pool: String,
    pub n_members: usize,
    pub var: f64,
    pub es: f64,
    pub rc: f64,
    pub rd: f64,
    pub degenerate: bool,
}

/// Reads any of the tables above into typed rows.
pub fn read_table<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    rdr.deserialize().map(|r| r.map_err(|e| Error::csv(path, e))).collect()
}
