use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::workload::{run_workload, BenchError, BenchResult, WorkloadConfig, DEFAULT_WARMUP_MS};
use crate::set_api::ImplKind;

pub const GRID_SIZES: [usize; 3] = [100, 1_000, 10_000];
pub const GRID_RATIOS: [f64; 3] = [0.0, 0.1, 1.0];
pub const GRID_THREADS: [usize; 12] = [1, 2, 4, 8, 16, 24, 32, 40, 48, 56, 64, 72];
pub const GRID_ROUNDS: usize = 10;
pub const DEFAULT_DURATION_MS: u64 = 10_000;

pub const CSV_HEADER: &str = "impl,size,update_ratio,threads,duration_ms,seed,ops_per_ms,ops_total,contains,inserts,removes,effective_updates,traversal_ns,update_ns,restarts,round";

/// One CSV line. Counts are floats so that `round=avg` rows can hold means.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    #[serde(rename = "impl")]
    pub impl_name: String,
    pub size: usize,
    pub update_ratio: f64,
    pub threads: usize,
    pub duration_ms: u64,
    pub seed: u64,
    pub ops_per_ms: f64,
    pub ops_total: f64,
    pub contains: f64,
    pub inserts: f64,
    pub removes: f64,
    pub effective_updates: f64,
    pub traversal_ns: f64,
    pub update_ns: f64,
    pub restarts: f64,
    /// Round index, or `avg`.
    pub round: String,
}

impl ResultRow {
    pub fn from_result(config: &WorkloadConfig, result: &BenchResult, round: &str) -> Self {
        ResultRow {
            impl_name: config.impl_kind.name().to_owned(),
            size: config.size,
            update_ratio: config.update_ratio,
            threads: config.threads,
            duration_ms: config.duration_ms,
            seed: config.seed,
            ops_per_ms: result.ops_per_ms,
            ops_total: result.ops_total as f64,
            contains: result.contains as f64,
            inserts: result.inserts as f64,
            removes: result.removes as f64,
            effective_updates: result.effective_updates as f64,
            traversal_ns: result.traversal_ns,
            update_ns: result.update_ns,
            restarts: result.restarts as f64,
            round: round.to_owned(),
        }
    }

    pub fn is_average(&self) -> bool {
        self.round == "avg"
    }
}

/// Column-wise mean of `rows` (one cell's rounds), labelled `avg`.
pub fn average(rows: &[ResultRow]) -> Option<ResultRow> {
    let first = rows.first()?;
    let n = rows.len() as f64;
    let mean = |f: fn(&ResultRow) -> f64| rows.iter().map(f).sum::<f64>() / n;
    Some(ResultRow {
        ops_per_ms: mean(|r| r.ops_per_ms),
        ops_total: mean(|r| r.ops_total),
        contains: mean(|r| r.contains),
        inserts: mean(|r| r.inserts),
        removes: mean(|r| r.removes),
        effective_updates: mean(|r| r.effective_updates),
        traversal_ns: mean(|r| r.traversal_ns),
        update_ns: mean(|r| r.update_ns),
        restarts: mean(|r| r.restarts),
        round: "avg".to_owned(),
        ..first.clone()
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridSpec {
    pub impls: Vec<ImplKind>,
    pub sizes: Vec<usize>,
    pub ratios: Vec<f64>,
    pub threads: Vec<usize>,
    pub rounds: usize,
    pub duration_ms: u64,
    pub seed: u64,
    pub warmup_ms: u64,
    pub sample_every: u32,
}

impl GridSpec {
    /// 3 sizes x 3 ratios x 12 thread counts, 10 rounds of 10 s each.
    pub fn full(impls: Vec<ImplKind>) -> Self {
        GridSpec {
            impls,
            sizes: GRID_SIZES.to_vec(),
            ratios: GRID_RATIOS.to_vec(),
            threads: GRID_THREADS.to_vec(),
            rounds: GRID_ROUNDS,
            duration_ms: DEFAULT_DURATION_MS,
            seed: 0,
            warmup_ms: DEFAULT_WARMUP_MS,
            sample_every: 1,
        }
    }

    pub fn cells(&self) -> Vec<WorkloadConfig> {
        let mut out = Vec::new();
        for &kind in &self.impls {
            for &size in &self.sizes {
                for &ratio in &self.ratios {
                    for &threads in &self.threads {
                        out.push(WorkloadConfig {
                            warmup_ms: self.warmup_ms,
                            sample_every: self.sample_every,
                            ..WorkloadConfig::new(
                                kind,
                                size,
                                ratio,
                                threads,
                                self.duration_ms,
                                self.seed,
                            )
                        });
                    }
                }
            }
        }
        out
    }
}

/// Runs every cell `rounds` times (round `r` uses seed `seed + r`) and returns
/// one row per round followed by the cell's `avg` row.
pub fn run_grid(spec: &GridSpec) -> Result<Vec<ResultRow>, BenchError> {
    run_grid_with(spec, |_| {})
}

/// Like [`run_grid`], calling `progress` with each row as it is produced.
pub fn run_grid_with(
    spec: &GridSpec,
    mut progress: impl FnMut(&ResultRow),
) -> Result<Vec<ResultRow>, BenchError> {
    let mut rows = Vec::new();
    for cell in spec.cells() {
        let mut cell_rows = Vec::with_capacity(spec.rounds);
        for round in 0..spec.rounds {
            let config = WorkloadConfig {
                seed: spec.seed.wrapping_add(round as u64),
                ..cell.clone()
            };
            let result = run_workload(&config)?;
            let row = ResultRow {
                seed: spec.seed,
                ..ResultRow::from_result(&config, &result, &round.to_string())
            };
            progress(&row);
            cell_rows.push(row);
        }
        if let Some(avg) = average(&cell_rows) {
            progress(&avg);
            cell_rows.push(avg);
        }
        rows.extend(cell_rows);
    }
    Ok(rows)
}

pub fn write_csv<W: Write>(rows: &[ResultRow], out: W) -> Result<(), csv::Error> {
    let mut writer = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(out);
    writer.write_record(CSV_HEADER.split(','))?;
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<ResultRow>, csv::Error> {
    csv::Reader::from_reader(input).deserialize().collect()
}

pub fn emit_csv(rows: &[ResultRow], path: &Path) -> Result<(), BenchError> {
    let display = path.display().to_string();
    let file = std::fs::File::create(path).map_err(|source| BenchError::Io {
        path: display.clone(),
        source,
    })?;
    write_csv(rows, std::io::BufWriter::new(file)).map_err(|e| BenchError::Csv {
        path: display,
        message: e.to_string(),
    })
}
