//! Experiment harness around the `hyperising` library: seeded parallel
//! sweeps over graph size and sample scaling, single-shot fit and diagnose
//! commands, ingestion of graphs and time series, CSV and SVG output.

pub mod commands;
pub mod config;
pub mod error;
pub mod plot;
pub mod sweep;

pub use config::{GibbsSettings, PlotMetric, SweepConfig};
pub use error::{CliError, Result};
pub use sweep::{run_sweep, trial_seed, SweepResult, TrialSeeds};
