//! Experiment orchestration: JSON run configs with stable hashes, single
//! runs persisted under `runs/<hash>/`, the kernel × loss ablation grid and
//! baseline-vs-contrastive comparisons.

mod config;
mod presets;
mod runner;

pub use config::{
    canonical_json, config_hash, load_config, load_grid, ComparisonVerdict, DataSource,
    GridConfig, Method, RunConfig, RunRecord, TrainSpec, SCHEMA_VERSION,
};
pub use presets::{
    baseline_run, benchmark_data, benchmark_run, default_grid, smoke_data, smoke_run,
};
pub use runner::{
    run_ablation, run_comparison, run_single, AblationReport, ComparisonReport,
};
