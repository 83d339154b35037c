//! Cross-product parameter sweeps.
//!
//! Each cell `(size, failure ratio, strategy, seed)` is an independent run
//! whose rng seed is derived from the master seed and the cell's `seed`
//! value only, so all strategies and sizes at one seed share the same
//! arrivals, placement and bandwidths. Cells run in parallel and are
//! collected in grid order, so output is identical from run to run.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine;
use crate::error::{Error, Result};
use crate::io::results::opt;
use crate::model::{validate_config, SimConfig, Strategy, DEFAULT_SIZES_KB};
use crate::rng::derive_seed;

pub const SWEEP_HEADER: [&str; 8] = [
    "strategy",
    "size_kb",
    "failure_ratio",
    "seed",
    "success_ratio",
    "primary_success_ratio",
    "avg_attempts",
    "region_success_ratio",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub content_sizes_kb: Vec<f64>,
    pub failure_ratios: Vec<f64>,
    pub strategies: Vec<Strategy>,
    pub seeds: Vec<u64>,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            content_sizes_kb: DEFAULT_SIZES_KB.to_vec(),
            failure_ratios: (0..=5).map(|i| i as f64 * 0.2).collect(),
            strategies: Strategy::ALL.to_vec(),
            seeds: (0..10).collect(),
        }
    }
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.content_sizes_kb.is_empty() || self.content_sizes_kb.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            problems.push("content sizes must be a non-empty list of positive values");
        }
        if self.failure_ratios.is_empty() || self.failure_ratios.iter().any(|r| !(0.0..=1.0).contains(r)) {
            problems.push("failure ratios must be a non-empty list within [0, 1]");
        }
        if self.strategies.is_empty() {
            problems.push("at least one strategy is required");
        }
        if self.seeds.is_empty() {
            problems.push("at least one seed is required");
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Argument(problems.join("; ")))
        }
    }

    pub fn cells(&self) -> usize {
        self.content_sizes_kb.len() * self.failure_ratios.len() * self.strategies.len() * self.seeds.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub strategy: Strategy,
    pub size_kb: f64,
    pub failure_ratio: f64,
    pub seed: u64,
    pub success_ratio: Option<f64>,
    pub primary_success_ratio: Option<f64>,
    pub avg_attempts: Option<f64>,
    pub region_success_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub strategy: Strategy,
    pub size_kb: f64,
    pub failure_ratio: f64,
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub failures: Vec<CellFailure>,
}

/// Runs every cell of `spec` on top of `cfg`. A failing cell is recorded
/// and the sweep carries on.
pub fn run_sweep(spec: &SweepSpec, cfg: &SimConfig) -> Result<SweepResult> {
    spec.validate()?;
    let base = validate_config(cfg.clone())?;
    let mut grid = Vec::with_capacity(spec.cells());
    for &size in &spec.content_sizes_kb {
        for &ratio in &spec.failure_ratios {
            for &strategy in &spec.strategies {
                for &seed in &spec.seeds {
                    grid.push((size, ratio, strategy, seed));
                }
            }
        }
    }
    let results: Vec<std::result::Result<SweepRow, CellFailure>> = grid
        .par_iter()
        .map(|&(size, ratio, strategy, seed)| {
            let cell = SimConfig {
                content_size_kb: size,
                failure_ratio: ratio,
                strategy,
                rng_seed: derive_seed(base.rng_seed, seed),
                ..base.clone()
            };
            match engine::run(&cell, strategy) {
                Ok(r) => Ok(SweepRow {
                    strategy,
                    size_kb: size,
                    failure_ratio: ratio,
                    seed,
                    success_ratio: r.successful_relay_ratio,
                    primary_success_ratio: r.primary_success_ratio,
                    avg_attempts: r.avg_repeated_requests,
                    region_success_ratio: r.region_success_ratio,
                }),
                Err(e) => {
                    Err(CellFailure { strategy, size_kb: size, failure_ratio: ratio, seed, error: e.to_string() })
                }
            }
        })
        .collect();

    let mut out = SweepResult::default();
    for r in results {
        match r {
            Ok(row) => out.rows.push(row),
            Err(f) => out.failures.push(f),
        }
    }
    Ok(out)
}

/// Long-format CSV, one row per cell.
pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SWEEP_HEADER)?;
    for r in rows {
        w.write_record([
            r.strategy.to_string(),
            r.size_kb.to_string(),
            r.failure_ratio.to_string(),
            r.seed.to_string(),
            opt(r.success_ratio),
            opt(r.primary_success_ratio),
            opt(r.avg_attempts),
            opt(r.region_success_ratio),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<sweep>", e))?;
    Ok(())
}

pub fn read_sweep_csv(text: &str) -> Result<Vec<SweepRow>> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let field = |s: &str| -> Result<Option<f64>> {
        if s.is_empty() {
            Ok(None)
        } else {
            s.parse().map(Some).map_err(|_| Error::Argument(format!("bad number `{s}`")))
        }
    };
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let num = |i: usize| field(&rec[i]).and_then(|v| v.ok_or_else(|| Error::Argument("missing value".into())));
        rows.push(SweepRow {
            strategy: rec[0].parse()?,
            size_kb: num(1)?,
            failure_ratio: num(2)?,
            seed: rec[3].parse().map_err(|_| Error::Argument(format!("bad seed `{}`", &rec[3])))?,
            success_ratio: field(&rec[4])?,
            primary_success_ratio: field(&rec[5])?,
            avg_attempts: field(&rec[6])?,
            region_success_ratio: field(&rec[7])?,
        });
    }
    Ok(rows)
}

/// Mean and sample standard deviation over the seeds that produced a value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl Stat {
    pub fn of(values: impl IntoIterator<Item = f64>) -> Option<Stat> {
        let v: Vec<f64> = values.into_iter().collect();
        if v.is_empty() {
            return None;
        }
        let n = v.len();
        let mean = v.iter().sum::<f64>() / n as f64;
        let var = if n > 1 { v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64 } else { 0.0 };
        Some(Stat { mean, std: var.sqrt(), n })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub strategy: Strategy,
    pub size_kb: f64,
    pub failure_ratio: f64,
    pub seeds: usize,
    pub success_ratio: Option<Stat>,
    pub primary_success_ratio: Option<Stat>,
    pub avg_attempts: Option<Stat>,
    pub region_success_ratio: Option<Stat>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub cells: Vec<CellSummary>,
    pub failures: Vec<CellFailure>,
}

/// Groups rows by `(strategy, size, failure ratio)` in first-seen order.
pub fn summarize(result: &SweepResult) -> SweepSummary {
    let mut order: Vec<(Strategy, u64, u64)> = Vec::new();
    let mut groups: BTreeMap<(Strategy, u64, u64), Vec<&SweepRow>> = BTreeMap::new();
    for r in &result.rows {
        let key = (r.strategy, r.size_kb.to_bits(), r.failure_ratio.to_bits());
        let g = groups.entry(key).or_default();
        if g.is_empty() {
            order.push(key);
        }
        g.push(r);
    }
    let cells = order
        .into_iter()
        .map(|key| {
            let rows = &groups[&key];
            let stat = |f: fn(&SweepRow) -> Option<f64>| Stat::of(rows.iter().filter_map(|r| f(r)));
            CellSummary {
                strategy: key.0,
                size_kb: f64::from_bits(key.1),
                failure_ratio: f64::from_bits(key.2),
                seeds: rows.len(),
                success_ratio: stat(|r| r.success_ratio),
                primary_success_ratio: stat(|r| r.primary_success_ratio),
                avg_attempts: stat(|r| r.avg_attempts),
                region_success_ratio: stat(|r| r.region_success_ratio),
            }
        })
        .collect();
    SweepSummary { cells, failures: result.failures.clone() }
}

pub fn write_summary_json<W: Write>(summary: &SweepSummary, mut out: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, summary)?;
    writeln!(out).map_err(|e| Error::io("<summary>", e))?;
    Ok(())
}
