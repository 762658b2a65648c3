//! Sweep specs, run stores, report generation and the command-line front end.

pub mod cli;
mod report;
mod spec;
mod store;
mod sweep;

pub use report::{
    cell_summaries, emit_frequency, emit_heatmap, emit_min_temp, emit_quantiles, emit_robustness,
    min_temp_points, performance_table, robustness_rows, CellSummary, MinTempPoint, SweepResults,
    FREQUENCY_HEADER, HEATMAP_HEADER, MIN_TEMP_HEADER, QUANTILE_HEADER, ROBUSTNESS_HEADER,
};
pub use spec::{
    config_id, default_grids, desk_grids, run_seed, AgentOverrides, Preset, RunKey, SweepSpec,
    ALPHA_GRID, DESK_ALPHA_GRID, DESK_LAMBDA_GRID, DESK_TOTAL_STEPS, LAMBDA_GRID,
    SPEC_SCHEMA_VERSION,
};
pub use store::{
    code_version, Artifacts, LogRow, ResultStore, RunEntry, RunId, RunManifest, RunStatus,
    StoredRun, TimingRow, LOGS_FILE, MANIFEST_FILE, RECORDS_FILE, TIMINGS_FILE,
};
pub use sweep::{run_sweep, SweepOptions, SweepSummary};

/// Environment variable naming the default output directory.
pub const OUT_ENV_VAR: &str = "PMDLAB_OUT";
/// Output directory used when neither `--out` nor `PMDLAB_OUT` is given.
pub const DEFAULT_OUT_DIR: &str = "pmdlab-out";
