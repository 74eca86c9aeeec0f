use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pool_opt::OptimizerConfig;
use crate::scenario_gen::SamplerConfig;
use crate::tail_metrics::{PairPolicy, TailSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Metrics,
    OptimizeRegional,
    OptimizeGlobal,
    ExpandExisting,
    Sample,
}

impl Mode {
    pub fn name(&self) -> &'static str {
        match self {
            Mode::Metrics => "metrics",
            Mode::OptimizeRegional => "optimize-regional",
            Mode::OptimizeGlobal => "optimize-global",
            Mode::ExpandExisting => "expand-existing",
            Mode::Sample => "sample",
        }
    }
}

/// Which countries may join an existing pool when it is expanded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExpansionScope {
    /// Countries of the pool's own region.
    #[default]
    Regional,
    /// Any country.
    Global,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoolDefinition {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region_filter: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pinned_members: Vec<String>,
    /// Explicit membership for the metrics command.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub members: Option<Vec<String>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputPaths {
    /// Defaults to `annual_losses.csv` in the output directory, where the
    /// sample command writes it.
    pub annual_losses: Option<PathBuf>,
    pub event_catalogue: Option<PathBuf>,
    pub season_labels: Option<PathBuf>,
    pub country_meta: Option<PathBuf>,
    /// Directory holding `optimal_pool_<name>.json`; defaults to the output
    /// directory.
    pub regional_results: Option<PathBuf>,
}

fn default_alpha() -> f64 {
    0.995
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub pools: Vec<PoolDefinition>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<Mode>,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sampler: Option<SamplerConfig>,
    #[serde(default)]
    pub inputs: InputPaths,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub expansion_scope: ExpansionScope,
    #[serde(default)]
    pub pair_policy: PairPolicy,
    /// Relative paths resolve against this directory (the config file's).
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl RunConfig {
    pub fn from_json(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::json("<config>", e))?;
        cfg.base_dir = base_dir.into();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let mut cfg: RunConfig = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        cfg.base_dir = base;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        TailSpec::new(self.alpha)?;
        self.optimizer.validate()?;
        if let Some(s) = &self.sampler {
            s.validate()?;
        }
        let mut names = HashSet::new();
        for p in &self.pools {
            let ok = !p.name.is_empty()
                && p.name
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_');
            if !ok {
                return Err(Error::InvalidConfig(format!(
                    "pool name {:?} must be nonempty and use only letters, digits, '-' or '_'",
                    p.name
                )));
            }
            if !names.insert(p.name.as_str()) {
                return Err(Error::InvalidConfig(format!("duplicate pool name {}", p.name)));
            }
        }
        Ok(())
    }

    pub fn tail_spec(&self) -> TailSpec {
        TailSpec::new(self.alpha).expect("validated")
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.output_dir)
    }

    pub fn annual_losses_path(&self) -> PathBuf {
        match &self.inputs.annual_losses {
            Some(p) => self.resolve(p),
            None => self.output_dir().join("annual_losses.csv"),
        }
    }

    pub fn regional_results_dir(&self) -> PathBuf {
        match &self.inputs.regional_results {
            Some(p) => self.resolve(p),
            None => self.output_dir(),
        }
    }

    /// Applies a seed override to the optimizer and sampler.
    pub fn set_seed(&mut self, seed: u64) {
        self.optimizer.rng_seed = seed;
        if let Some(s) = self.sampler.as_mut() {
            s.rng_seed = seed;
        }
    }

    /// SHA-256 of the canonical JSON form.
    pub fn digest(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        super::manifest::sha256_hex(json.as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_minimal_config() {
        let cfg = RunConfig::from_json(r#"{"pools":[{"name":"EAP","region_filter":"EAP"}]}"#, "/tmp").unwrap();
        assert_eq!(cfg.alpha, 0.995);
        assert_eq!(cfg.optimizer, OptimizerConfig::default());
        assert_eq!(cfg.output_dir(), PathBuf::from("/tmp/out"));
        assert_eq!(cfg.annual_losses_path(), PathBuf::from("/tmp/out/annual_losses.csv"));
    }

    #[test]
    fn rejects_bad_configs() {
        let dup = r#"{"pools":[{"name":"A"},{"name":"A"}]}"#;
        assert!(RunConfig::from_json(dup, ".").is_err());
        let bad_name = r#"{"pools":[{"name":"a/b"}]}"#;
        assert!(RunConfig::from_json(bad_name, ".").is_err());
        assert!(RunConfig::from_json(r#"{"alpha":1.2}"#, ".").is_err());
        assert!(RunConfig::from_json(r#"{"bogus":1}"#, ".").is_err());
        let bad_pop = r#"{"optimizer":{"population_size":3}}"#;
        assert!(RunConfig::from_json(bad_pop, ".").is_err());
    }

    #[test]
    fn seed_override_reaches_both_stages() {
        let mut cfg = RunConfig::from_json(r#"{"sampler":{"n_years":10}}"#, ".").unwrap();
        cfg.set_seed(99);
        assert_eq!(cfg.optimizer.rng_seed, 99);
        assert_eq!(cfg.sampler.unwrap().rng_seed, 99);
    }
}
