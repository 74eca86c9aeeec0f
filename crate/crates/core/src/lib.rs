//! Tail-risk diversification of sovereign catastrophe risk pools.
//!
//! - [`loss_data`]: annual loss matrices, event catalogues, country metadata.
//! - [`tail_metrics`]: VaR, ES, MES, risk concentration and diversification,
//!   member shares, tail-loss correlation.
//! - [`pool_opt`]: two-step evolutionary search for optimal pool
//!   compositions, with an exhaustive oracle.
//! - [`scenario_gen`]: synthetic annual loss series from an event catalogue.
//! - [`report`]: run configurations and the command workflows behind the CLI.

pub mod error;
pub mod loss_data;
pub mod pool_opt;
pub mod report;
pub mod scenario_gen;
pub mod tail_metrics;

pub use error::{Error, Result};
pub use loss_data::{AnnualLossMatrix, CountryMeta, Event, EventCatalogue, YearWindow};
pub use pool_opt::{AllocationVector, OptimizerConfig, ParetoFront, SelectionVector};
pub use tail_metrics::{MemberMetrics, PoolMetrics, TailSpec};
