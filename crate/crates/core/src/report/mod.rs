//! Run configurations, command workflows and their output files.

mod commands;
mod config;
mod manifest;
pub mod output;

pub use commands::{
    cmd_expand_existing, cmd_metrics, cmd_optimize_global, cmd_optimize_regional, cmd_sample, expand_pools,
    multi_pool_front, output_digests, pareto_front_table, regional_optimum, resolve_members, CommandOutput,
    Configuration, ConfiguredPool, MultiPoolResult, RegionalResult,
};
pub use config::{ExpansionScope, InputPaths, Mode, PoolDefinition, RunConfig};
pub use manifest::{file_digest, sha256_hex, RunManifest};

/// Runs the command selected by `mode`.
pub fn run_mode(cfg: &RunConfig, mode: Mode) -> crate::Result<CommandOutput> {
    match mode {
        Mode::Metrics => cmd_metrics(cfg),
        Mode::OptimizeRegional => cmd_optimize_regional(cfg),
        Mode::OptimizeGlobal => cmd_optimize_global(cfg),
        Mode::ExpandExisting => cmd_expand_existing(cfg),
        Mode::Sample => cmd_sample(cfg),
    }
}
