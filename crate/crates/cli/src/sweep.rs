//! Trial lattice runner and the sweep CSV schema.

use std::io::{Read, Write};
use std::time::Instant;

use hyperising::combinatorics::splitmix64;
use hyperising::{
    assign_coefficients, draw_samples, regular_hypergraph, run_pipeline, scaling_n, AggregationRule,
    CoefficientScheme, InteractionTensor, PipelineOptions, SampleMatrix,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{GridPoint, SweepConfig};
use crate::error::{CliError, Result};

pub const SWEEP_SCHEMA: &str = "# hyperising sweep v1";
pub const SUMMARY_SCHEMA: &str = "# hyperising summary v1";

const COLUMNS: [&str; 13] = [
    "p",
    "k",
    "d",
    "alpha",
    "n",
    "trial",
    "seed",
    "status",
    "recovery_rate",
    "success",
    "lambda",
    "false_positives",
    "error",
];

/// Seed of trial `t` at grid point `grid_index`.
pub fn trial_seed(base_seed: u64, grid_index: usize, t: usize) -> u64 {
    splitmix64(base_seed ^ (grid_index as u64 * 1_000_000_000 + t as u64))
}

/// Independent streams for the stages of one trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TrialSeeds {
    pub hypergraph: u64,
    pub coefficients: u64,
    pub sampler: u64,
}

impl TrialSeeds {
    pub fn from_trial(seed: u64) -> Self {
        TrialSeeds {
            hypergraph: splitmix64(seed ^ 0x1),
            coefficients: splitmix64(seed ^ 0x2),
            sampler: splitmix64(seed ^ 0x3),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialMetrics {
    pub recovery_rate: f64,
    pub success: bool,
    pub lambda: f64,
    pub false_positives: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRow {
    pub grid_index: usize,
    pub p: usize,
    pub k: usize,
    pub d: usize,
    pub alpha: Option<f64>,
    pub n: Option<usize>,
    pub trial: usize,
    pub seed: u64,
    pub outcome: std::result::Result<TrialMetrics, String>,
    /// Seconds; kept out of the CSV.
    pub wall_time: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSummary {
    pub p: usize,
    pub alpha: Option<f64>,
    pub n: Option<usize>,
    pub completed: usize,
    pub failed: usize,
    pub mean_rate: Option<f64>,
    pub success_fraction: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub rows: Vec<TrialRow>,
    pub summary: Vec<GridSummary>,
}

/// Truth model of one trial.
pub fn trial_model(cfg: &SweepConfig, p: usize, seeds: &TrialSeeds) -> hyperising::Result<InteractionTensor> {
    let support = regular_hypergraph(p, cfg.k, cfg.d, seeds.hypergraph)?;
    let scheme = CoefficientScheme {
        magnitude: cfg.coupling_magnitude().map_err(|e| hyperising::Error::Argument(e.to_string()))?,
        sign_mode: cfg.signs,
        seed: seeds.coefficients,
    };
    assign_coefficients(&support, &scheme)
}

pub fn pipeline_options(cfg: &SweepConfig) -> PipelineOptions {
    PipelineOptions {
        lambda_mode: cfg.lambda.clone(),
        rule: AggregationRule {
            mode: cfg.rule,
            ..AggregationRule::default()
        },
        ..PipelineOptions::default()
    }
}

fn grid_n(cfg: &SweepConfig, g: &GridPoint) -> hyperising::Result<usize> {
    match (g.n, g.alpha) {
        (Some(n), _) => Ok(n),
        (None, Some(a)) => scaling_n(a, g.p, cfg.k, cfg.d, cfg.divisor),
        (None, None) => unreachable!("grid point without alpha or n"),
    }
}

fn run_trial(cfg: &SweepConfig, g: &GridPoint, seed: u64) -> hyperising::Result<(usize, TrialMetrics)> {
    let seeds = TrialSeeds::from_trial(seed);
    let n = grid_n(cfg, g)?;
    let truth = trial_model(cfg, g.p, &seeds)?;
    let samples: SampleMatrix = draw_samples(&truth, n, &cfg.gibbs.with_seed(seeds.sampler))?;
    let report = run_pipeline(&samples, cfg.k, Some(&truth), &pipeline_options(cfg))?;
    let m = report.metrics.expect("truth was supplied");
    Ok((
        n,
        TrialMetrics {
            recovery_rate: m.recovery_rate,
            success: m.success,
            lambda: report.lambda,
            false_positives: m.false_positives,
        },
    ))
}

/// Runs every (grid point, trial) pair on a pool of `cfg.workers` threads.
/// Rows come back in lattice order whatever the scheduling.
pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepResult> {
    cfg.validate()?;
    let grid = cfg.grid();
    let jobs: Vec<(GridPoint, usize)> = grid
        .iter()
        .flat_map(|g| (0..cfg.trials).map(move |t| (*g, t)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| CliError::invalid(format!("cannot start worker pool: {e}")))?;
    let rows: Vec<TrialRow> = pool.install(|| {
        jobs.par_iter()
            .map(|(g, t)| {
                let seed = trial_seed(cfg.base_seed, g.index, *t);
                let start = Instant::now();
                let res = run_trial(cfg, g, seed);
                let wall_time = start.elapsed().as_secs_f64();
                let (n, outcome) = match res {
                    Ok((n, m)) => (Some(n), Ok(m)),
                    Err(e) => {
                        log::warn!("grid point {} trial {t} failed: {e}", g.index);
                        (grid_n(cfg, g).ok(), Err(e.to_string()))
                    }
                };
                TrialRow {
                    grid_index: g.index,
                    p: g.p,
                    k: cfg.k,
                    d: cfg.d,
                    alpha: g.alpha,
                    n,
                    trial: *t,
                    seed,
                    outcome,
                    wall_time,
                }
            })
            .collect()
    });
    let summary = summarize(&grid, &rows);
    Ok(SweepResult { rows, summary })
}

fn summarize(grid: &[GridPoint], rows: &[TrialRow]) -> Vec<GridSummary> {
    grid.iter()
        .map(|g| {
            let mine: Vec<&TrialRow> = rows.iter().filter(|r| r.grid_index == g.index).collect();
            let ok: Vec<&TrialMetrics> = mine.iter().filter_map(|r| r.outcome.as_ref().ok()).collect();
            let mean = |f: &dyn Fn(&TrialMetrics) -> f64| {
                (!ok.is_empty()).then(|| ok.iter().map(|m| f(m)).sum::<f64>() / ok.len() as f64)
            };
            GridSummary {
                p: g.p,
                alpha: g.alpha,
                n: mine.iter().find_map(|r| r.n),
                completed: ok.len(),
                failed: mine.len() - ok.len(),
                mean_rate: mean(&|m| m.recovery_rate),
                success_fraction: mean(&|m| f64::from(u8::from(m.success))),
            }
        })
        .collect()
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::invalid(format!("csv: {e}"))
}

pub fn write_sweep_csv<W: Write>(rows: &[TrialRow], mut w: W) -> Result<()> {
    writeln!(w, "{SWEEP_SCHEMA}").map_err(|e| CliError::io("<sweep csv>", e))?;
    let mut out = csv::Writer::from_writer(w);
    out.write_record(COLUMNS).map_err(csv_err)?;
    for r in rows {
        let (status, rate, success, lambda, fp, err) = match &r.outcome {
            Ok(m) => (
                "ok",
                m.recovery_rate.to_string(),
                m.success.to_string(),
                m.lambda.to_string(),
                m.false_positives.to_string(),
                String::new(),
            ),
            Err(e) => ("failed", String::new(), String::new(), String::new(), String::new(), e.clone()),
        };
        out.write_record([
            r.p.to_string(),
            r.k.to_string(),
            r.d.to_string(),
            opt(r.alpha),
            opt(r.n),
            r.trial.to_string(),
            r.seed.to_string(),
            status.to_string(),
            rate,
            success,
            lambda,
            fp,
            err,
        ])
        .map_err(csv_err)?;
    }
    out.flush().map_err(|e| CliError::io("<sweep csv>", e))?;
    Ok(())
}

pub fn write_summary_csv<W: Write>(summary: &[GridSummary], mut w: W) -> Result<()> {
    writeln!(w, "{SUMMARY_SCHEMA}").map_err(|e| CliError::io("<summary csv>", e))?;
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["p", "alpha", "n", "completed", "failed", "mean_rate", "success_fraction"])
        .map_err(csv_err)?;
    for s in summary {
        out.write_record([
            s.p.to_string(),
            opt(s.alpha),
            opt(s.n),
            s.completed.to_string(),
            s.failed.to_string(),
            opt(s.mean_rate),
            opt(s.success_fraction),
        ])
        .map_err(csv_err)?;
    }
    out.flush().map_err(|e| CliError::io("<summary csv>", e))?;
    Ok(())
}

pub fn write_timings_csv<W: Write>(rows: &[TrialRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["p", "alpha", "n", "trial", "wall_time"]).map_err(csv_err)?;
    for r in rows {
        out.write_record([
            r.p.to_string(),
            opt(r.alpha),
            opt(r.n),
            r.trial.to_string(),
            format!("{:.6}", r.wall_time),
        ])
        .map_err(csv_err)?;
    }
    out.flush().map_err(|e| CliError::io("<timings csv>", e))?;
    Ok(())
}

fn parse_field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, line: usize) -> Result<Option<T>> {
    let s = rec.get(i).unwrap_or("");
    if s.is_empty() {
        return Ok(None);
    }
    s.parse()
        .map(Some)
        .map_err(|_| CliError::invalid(format!("line {line}: bad value {s:?} in column {}", COLUMNS[i])))
}

/// Reads a sweep CSV back. The grid index is recovered from the order of
/// first appearance of `(p, alpha, n)`.
pub fn read_sweep_csv<R: Read>(r: R) -> Result<Vec<TrialRow>> {
    let mut text = String::new();
    let mut r = r;
    r.read_to_string(&mut text)
        .map_err(|e| CliError::io("<sweep csv>", e))?;
    let mut lines = text.splitn(2, '\n');
    let first = lines.next().unwrap_or("").trim_end();
    if first != SWEEP_SCHEMA {
        return Err(CliError::invalid(format!(
            "not a sweep CSV: first line is {first:?}, expected {SWEEP_SCHEMA:?}"
        )));
    }
    let body = lines.next().unwrap_or("");
    let mut rd = csv::ReaderBuilder::new().from_reader(body.as_bytes());
    let header = rd.headers().map_err(csv_err)?.clone();
    if header.iter().ne(COLUMNS.iter().copied()) {
        return Err(CliError::invalid(format!(
            "sweep CSV columns {:?} do not match {:?}",
            header.iter().collect::<Vec<_>>(),
            COLUMNS
        )));
    }
    let mut keys: Vec<(usize, Option<u64>, Option<usize>)> = Vec::new();
    let mut rows = Vec::new();
    for (i, rec) in rd.records().enumerate() {
        let line = i + 3;
        let rec = rec.map_err(csv_err)?;
        let need = |v: Option<usize>, c: &str| {
            v.ok_or_else(|| CliError::invalid(format!("line {line}: missing {c}")))
        };
        let p = need(parse_field(&rec, 0, line)?, "p")?;
        let alpha: Option<f64> = parse_field(&rec, 3, line)?;
        let n: Option<usize> = parse_field(&rec, 4, line)?;
        let key = (p, alpha.map(f64::to_bits), n);
        let grid_index = match keys.iter().position(|k| *k == key) {
            Some(g) => g,
            None => {
                keys.push(key);
                keys.len() - 1
            }
        };
        let outcome = match rec.get(7).unwrap_or("") {
            "ok" => Ok(TrialMetrics {
                recovery_rate: parse_field(&rec, 8, line)?
                    .ok_or_else(|| CliError::invalid(format!("line {line}: missing recovery_rate")))?,
                success: parse_field(&rec, 9, line)?
                    .ok_or_else(|| CliError::invalid(format!("line {line}: missing success")))?,
                lambda: parse_field(&rec, 10, line)?.unwrap_or(f64::NAN),
                false_positives: parse_field(&rec, 11, line)?.unwrap_or(0),
            }),
            "failed" => Err(rec.get(12).unwrap_or("").to_string()),
            other => return Err(CliError::invalid(format!("line {line}: unknown status {other:?}"))),
        };
        rows.push(TrialRow {
            grid_index,
            p,
            k: need(parse_field(&rec, 1, line)?, "k")?,
            d: need(parse_field(&rec, 2, line)?, "d")?,
            alpha,
            n,
            trial: need(parse_field(&rec, 5, line)?, "trial")?,
            seed: parse_field(&rec, 6, line)?.unwrap_or(0),
            outcome,
            wall_time: 0.0,
        });
    }
    Ok(rows)
}

/// Summary per grid point of rows read back from a CSV.
pub fn summarize_rows(rows: &[TrialRow]) -> Vec<GridSummary> {
    let mut grid: Vec<GridPoint> = Vec::new();
    for r in rows {
        if !grid.iter().any(|g| g.index == r.grid_index) {
            grid.push(GridPoint {
                index: r.grid_index,
                p: r.p,
                alpha: r.alpha,
                n: r.n,
            });
        }
    }
    summarize(&grid, rows)
}
