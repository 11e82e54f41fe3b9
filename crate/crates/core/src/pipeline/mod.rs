//! Offline/online orchestration with a persistent artifact store.

pub mod config;
pub mod offline;
pub mod online;
pub mod store;

use std::path::Path;

pub use config::{DomainSpec, LabelSource, RunConfig, SamplingScheme};
pub use offline::{
    dataset_params, discretize, label_parameters, load_config, load_dataset, load_model, load_nodes, load_pod,
    load_snapshots, offline, open_store, run_stage, run_through, snapshot_params, StageStatus, TrainSummary, STAGES,
};
pub use online::{
    benchmark, benchmark_with, grid_for_store, hyperparameter_grid, relative_error, BenchmarkReport, BenchmarkRow,
    DomainPolicy, GridRow, GridSpec, OnlineResult, Surrogate,
};
pub use store::{ArtifactStore, Manifest};

use crate::error::Result;
use crate::netcalc::verify;

/// Runs the network-calculus contract suite and the inverse-network size
/// sweep, writing `netcalc_verify.csv` and `netcalc_scaling.csv` into `dir`.
pub fn netcalc_verify(dir: &Path, draws: usize, seed: u64) -> Result<Vec<verify::VerifyRow>> {
    std::fs::create_dir_all(dir)?;
    let rows = verify::contract_suite(draws, seed)?;
    verify::write_verify_csv(&rows, std::fs::File::create(dir.join("netcalc_verify.csv"))?)?;
    let scaling = verify::inverse_scaling_sweep(&[1e-1, 1e-2, 1e-3], &[1, 2, 4], 0.5)?;
    verify::write_scaling_csv(&scaling, std::fs::File::create(dir.join("netcalc_scaling.csv"))?)?;
    Ok(rows)
}

/// Sizes the global worker pool. Must run before any parallel work.
pub fn set_worker_threads(n: usize) -> Result<()> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| crate::Error::Config(format!("cannot size the worker pool: {e}")))
}
