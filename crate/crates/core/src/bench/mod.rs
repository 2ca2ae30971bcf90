//! Timed mixed workloads over the concurrent sets, with per-op traversal and
//! update timings and CSV output.

mod report;
mod workload;

pub use report::{
    average, emit_csv, read_csv, run_grid, run_grid_with, write_csv, GridSpec, ResultRow,
    CSV_HEADER, DEFAULT_DURATION_MS, GRID_RATIOS, GRID_ROUNDS, GRID_SIZES, GRID_THREADS,
};
pub use workload::{
    prefill, run_workload, stationarity_bound, BenchError, BenchProbe, BenchResult, WorkloadConfig,
    DEFAULT_WARMUP_MS,
};
