//! Seeded Monte Carlo replication.
//!
//! Every (grid cell, replicate) pair draws from its own counter-based stream
//! derived from the master seed, so a replicate can be rerun in isolation
//! and the output does not depend on the worker count.

mod config;

pub use config::{BlockMethod, EstimatorKind, ExperimentConfig};

use std::io::Write;
use std::path::Path;
use std::time::{Duration, Instant};

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::blocks::{random_pair_blocks_seeded, threshold_blocks, BlockCollection};
use crate::error::{Error, Result};
use crate::estimators::{bae, ideal_estimator, mae, marginal_estimator, marginal_with_mae_ci, LocationScale};
use crate::io::{create, fmt_f64};
use crate::model::{sample, synthetic_covariance, EllipticalSpec, SampleMatrix};
use crate::rng::replicate_stream;
use crate::robust::robust_location_scale;

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateRecord {
    pub scenario: String,
    pub n: usize,
    pub p: usize,
    pub rep: usize,
    pub estimator: String,
    /// `None` when the estimator failed on this replicate.
    pub theta_hat: Option<f64>,
    pub theta_true: f64,
    pub sq_err: Option<f64>,
    pub ci_hit: Option<bool>,
    pub seed: u64,
    /// Not written out, so that output files stay reproducible.
    pub wall_time: Duration,
    pub error: Option<String>,
}

/// The emitted columns, in order.
pub const RECORD_COLUMNS: [&str; 10] =
    ["scenario", "n", "p", "rep", "estimator", "theta_hat", "theta_true", "sq_err", "ci_hit", "seed"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub scenario: String,
    pub n: usize,
    pub p: usize,
    pub estimator: String,
    pub count: usize,
    pub failed: usize,
    pub theta_true: f64,
    pub mean: f64,
    /// Replicate variance of `θ̂` (denominator `count − 1`).
    pub variance: f64,
    pub mse: f64,
    /// Monte Carlo standard error of `mse`.
    pub mse_se: f64,
    /// `mse · n p / θ²`.
    pub scaled_mse: f64,
    pub coverage: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Jsonl,
}

impl std::str::FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "jsonl" => Ok(Format::Jsonl),
            _ => Err(Error::Config(format!("unknown output format {s:?}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub records: Vec<ReplicateRecord>,
    pub summary: Vec<SummaryRow>,
}

struct Cell {
    index: u32,
    n: usize,
    p: usize,
    spec: EllipticalSpec,
    theta: f64,
    blocks: Option<BlockCollection>,
    truth: Option<LocationScale>,
    /// Σ = 0: every draw is μ and every estimator is 0.
    degenerate: bool,
}

fn build_cells(cfg: &ExperimentConfig) -> Result<Vec<Cell>> {
    let needs_blocks = cfg.estimators.iter().any(|e| e.uses_blocks());
    let mut cells = Vec::new();
    for &n in &cfg.n_grid {
        for &p in &cfg.p_grid {
            let index = cells.len() as u32;
            let sigma = synthetic_covariance(&cfg.covariance, p)?;
            let degenerate = sigma.iter().all(|v| *v == 0.0);
            let spec = EllipticalSpec::new(DVector::zeros(p), sigma, cfg.family.clone())?;
            let theta = spec.theta(cfg.m)?;
            let blocks = if needs_blocks {
                Some(match cfg.blocks {
                    BlockMethod::Aligned(k) => BlockCollection::contiguous(p, k)?,
                    BlockMethod::Threshold(t) => threshold_blocks(spec.sigma(), t)?,
                    BlockMethod::Pairs(count) => {
                        random_pair_blocks_seeded(p, count, cfg.seed ^ ((index as u64) << 40))?
                    }
                })
            } else {
                None
            };
            let truth = if degenerate { None } else { Some(LocationScale::from_spec(&spec, blocks.as_ref())?) };
            if cfg.estimators.contains(&EstimatorKind::Ideal) && !degenerate {
                spec.precision()?;
            }
            cells.push(Cell { index, n, p, spec, theta, blocks, truth, degenerate });
        }
    }
    Ok(cells)
}

struct Outcome {
    value: f64,
    ci_hit: Option<bool>,
}

fn evaluate(
    kind: EstimatorKind,
    cell: &Cell,
    samples: &SampleMatrix,
    plugin: Option<&Result<LocationScale>>,
    cfg: &ExperimentConfig,
) -> Result<Outcome> {
    if cell.degenerate {
        let ci_hit = (kind == EstimatorKind::MarginalCi).then_some(cell.theta == 0.0);
        return Ok(Outcome { value: 0.0, ci_hit });
    }
    let truth = cell.truth.as_ref().expect("non-degenerate cell has true location/scale");
    let m = cfg.m;
    let plug = || -> Result<&LocationScale> {
        match plugin.expect("plug-in computed when requested") {
            Ok(loc) => Ok(loc),
            Err(e) => Err(Error::domain(format!("plug-in location/scale failed: {e}"))),
        }
    };
    let blocks = || cell.blocks.as_ref().expect("blocks built when requested");
    let est = match kind {
        EstimatorKind::Ideal => ideal_estimator(samples, cell.spec.mu(), cell.spec.precision()?, m)?,
        EstimatorKind::Marginal => marginal_estimator(samples, 0, truth.mu_hat[0], truth.sigma_diag_hat[0], m)?,
        EstimatorKind::Mae => mae(samples, truth, m)?,
        EstimatorKind::Bae => bae(samples, blocks(), truth, m)?,
        EstimatorKind::MarginalPlugin => {
            let loc = plug()?;
            marginal_estimator(samples, 0, loc.mu_hat[0], loc.sigma_diag_hat[0], m)?
        }
        EstimatorKind::MaePlugin => mae(samples, plug()?, m)?,
        EstimatorKind::BaePlugin => bae(samples, blocks(), plug()?, m)?,
        EstimatorKind::MarginalCi => marginal_with_mae_ci(samples, 0, plug()?, m, cfg.ci_alpha)?,
    };
    Ok(Outcome { value: est.value, ci_hit: est.ci.map(|ci| ci.contains(cell.theta)) })
}

fn run_replicate(cfg: &ExperimentConfig, cell: &Cell, rep: usize) -> Vec<ReplicateRecord> {
    let mut rng = replicate_stream(cfg.seed, cell.index, rep as u32);
    let base = |estimator: EstimatorKind| ReplicateRecord {
        scenario: cfg.scenario.clone(),
        n: cell.n,
        p: cell.p,
        rep,
        estimator: estimator.name().to_owned(),
        theta_hat: None,
        theta_true: cell.theta,
        sq_err: None,
        ci_hit: None,
        seed: cfg.seed,
        wall_time: Duration::ZERO,
        error: None,
    };
    let samples = match sample(&cell.spec, cell.n, &mut rng) {
        Ok(s) => s,
        Err(e) => {
            return cfg
                .estimators
                .iter()
                .map(|&k| ReplicateRecord { error: Some(format!("sampling failed: {e}")), ..base(k) })
                .collect()
        }
    };
    let plugin = if !cell.degenerate && cfg.estimators.iter().any(|e| e.uses_plugin()) {
        let blocks = if cfg.estimators.contains(&EstimatorKind::BaePlugin) { cell.blocks.as_ref() } else { None };
        Some(if cfg.robust {
            robust_location_scale(&samples, blocks, &cfg.huber, &mut rng)
        } else {
            LocationScale::from_sample(&samples, blocks)
        })
    } else {
        None
    };
    cfg.estimators
        .iter()
        .map(|&kind| {
            let start = Instant::now();
            let outcome = evaluate(kind, cell, &samples, plugin.as_ref(), cfg);
            let wall_time = start.elapsed();
            match outcome {
                Ok(o) => ReplicateRecord {
                    theta_hat: Some(o.value),
                    sq_err: Some((o.value - cell.theta).powi(2)),
                    ci_hit: o.ci_hit,
                    wall_time,
                    ..base(kind)
                },
                Err(e) => ReplicateRecord { error: Some(e.to_string()), wall_time, ..base(kind) },
            }
        })
        .collect()
}

/// Runs every grid cell and replicate; records come back ordered by
/// (cell, replicate, estimator) whatever the number of workers.
pub fn run_experiment(cfg: &ExperimentConfig, workers: Option<usize>) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let cells = build_cells(cfg)?;
    let jobs: Vec<(usize, usize)> = (0..cells.len()).flat_map(|c| (0..cfg.replicates).map(move |r| (c, r))).collect();
    let work = || -> Vec<ReplicateRecord> {
        jobs.par_iter().flat_map_iter(|&(c, r)| run_replicate(cfg, &cells[c], r)).collect()
    };
    let records = match workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w.max(1))
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(work),
        None => work(),
    };
    let summary = summarize(&records);
    Ok(ExperimentOutput { records, summary })
}

/// Groups by (scenario, n, p, estimator) in order of first appearance.
/// Failed replicates are counted and left out of every aggregate.
pub fn summarize(records: &[ReplicateRecord]) -> Vec<SummaryRow> {
    let mut keys: Vec<(String, usize, usize, String)> = Vec::new();
    let mut groups: std::collections::HashMap<(String, usize, usize, String), Vec<&ReplicateRecord>> =
        std::collections::HashMap::new();
    for r in records {
        let key = (r.scenario.clone(), r.n, r.p, r.estimator.clone());
        groups
            .entry(key.clone())
            .or_insert_with(|| {
                keys.push(key);
                Vec::new()
            })
            .push(r);
    }
    keys.into_iter()
        .map(|key| {
            let group = &groups[&key];
            let ok: Vec<&&ReplicateRecord> = group.iter().filter(|r| r.theta_hat.is_some()).collect();
            let count = ok.len();
            let theta_true = group[0].theta_true;
            let values: Vec<f64> = ok.iter().map(|r| r.theta_hat.unwrap()).collect();
            let errs: Vec<f64> = ok.iter().map(|r| r.sq_err.unwrap()).collect();
            let (mean, variance) = mean_var(&values);
            let (mse, err_var) = mean_var(&errs);
            let hits: Vec<bool> = ok.iter().filter_map(|r| r.ci_hit).collect();
            let coverage = (!hits.is_empty()).then(|| hits.iter().filter(|h| **h).count() as f64 / hits.len() as f64);
            let (n, p) = (key.1, key.2);
            SummaryRow {
                scenario: key.0,
                n,
                p,
                estimator: key.3,
                count,
                failed: group.len() - count,
                theta_true,
                mean,
                variance,
                mse,
                mse_se: (err_var / count as f64).sqrt(),
                scaled_mse: mse * (n * p) as f64 / (theta_true * theta_true),
                coverage,
            }
        })
        .collect()
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var)
}

fn opt_f64(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

fn opt_bool(x: Option<bool>) -> String {
    x.map(|b| if b { "1" } else { "0" }.to_owned()).unwrap_or_default()
}

fn record_json(r: &ReplicateRecord) -> serde_json::Value {
    serde_json::json!({
        "scenario": r.scenario,
        "n": r.n,
        "p": r.p,
        "rep": r.rep,
        "estimator": r.estimator,
        "theta_hat": r.theta_hat,
        "theta_true": r.theta_true,
        "sq_err": r.sq_err,
        "ci_hit": r.ci_hit,
        "seed": r.seed,
    })
}

pub fn write_records<W: Write>(w: &mut W, records: &[ReplicateRecord], format: Format) -> std::io::Result<()> {
    match format {
        Format::Csv => {
            let mut out = csv::Writer::from_writer(w);
            out.write_record(RECORD_COLUMNS)?;
            for r in records {
                out.write_record([
                    r.scenario.clone(),
                    r.n.to_string(),
                    r.p.to_string(),
                    r.rep.to_string(),
                    r.estimator.clone(),
                    opt_f64(r.theta_hat),
                    fmt_f64(r.theta_true),
                    opt_f64(r.sq_err),
                    opt_bool(r.ci_hit),
                    r.seed.to_string(),
                ])?;
            }
            out.flush()
        }
        Format::Jsonl => {
            for r in records {
                writeln!(w, "{}", record_json(r))?;
            }
            Ok(())
        }
    }
}

pub const SUMMARY_COLUMNS: [&str; 13] = [
    "scenario",
    "n",
    "p",
    "estimator",
    "count",
    "failed",
    "theta_true",
    "mean",
    "variance",
    "mse",
    "mse_se",
    "scaled_mse",
    "coverage",
];

pub fn write_summary<W: Write>(w: &mut W, rows: &[SummaryRow], format: Format) -> std::io::Result<()> {
    match format {
        Format::Csv => {
            let mut out = csv::Writer::from_writer(w);
            out.write_record(SUMMARY_COLUMNS)?;
            for s in rows {
                out.write_record([
                    s.scenario.clone(),
                    s.n.to_string(),
                    s.p.to_string(),
                    s.estimator.clone(),
                    s.count.to_string(),
                    s.failed.to_string(),
                    fmt_f64(s.theta_true),
                    fmt_f64(s.mean),
                    fmt_f64(s.variance),
                    fmt_f64(s.mse),
                    fmt_f64(s.mse_se),
                    fmt_f64(s.scaled_mse),
                    opt_f64(s.coverage),
                ])?;
            }
            out.flush()
        }
        Format::Jsonl => {
            for s in rows {
                writeln!(w, "{}", serde_json::to_string(s).map_err(std::io::Error::other)?)?;
            }
            Ok(())
        }
    }
}

/// Writes records to `path`.
pub fn emit(path: &Path, records: &[ReplicateRecord], format: Format) -> Result<()> {
    let mut w = create(path)?;
    write_records(&mut w, records, format).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn emit_summary(path: &Path, rows: &[SummaryRow], format: Format) -> Result<()> {
    let mut w = create(path)?;
    write_summary(&mut w, rows, format).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads back a record CSV written by [`emit`].
pub fn read_records_csv(path: &Path) -> Result<Vec<ReplicateRecord>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(file);
    let header = rdr.headers().map_err(|e| Error::parse(path, e.to_string()))?.clone();
    if header.iter().ne(RECORD_COLUMNS) {
        return Err(Error::parse(path, format!("unexpected header {header:?}")));
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::parse(path, e.to_string()))?;
        let bad = |col: &str| Error::parse(path, format!("row {}: bad {col}", i + 2));
        let num = |k: usize, col: &str| rec[k].parse::<usize>().map_err(|_| bad(col));
        let float = |k: usize, col: &str| -> Result<Option<f64>> {
            if rec[k].is_empty() {
                Ok(None)
            } else {
                rec[k].parse::<f64>().map(Some).map_err(|_| bad(col))
            }
        };
        out.push(ReplicateRecord {
            scenario: rec[0].to_owned(),
            n: num(1, "n")?,
            p: num(2, "p")?,
            rep: num(3, "rep")?,
            estimator: rec[4].to_owned(),
            theta_hat: float(5, "theta_hat")?,
            theta_true: float(6, "theta_true")?.ok_or_else(|| bad("theta_true"))?,
            sq_err: float(7, "sq_err")?,
            ci_hit: match &rec[8] {
                "" => None,
                "1" => Some(true),
                "0" => Some(false),
                _ => return Err(bad("ci_hit")),
            },
            seed: rec[9].parse().map_err(|_| bad("seed"))?,
            wall_time: Duration::ZERO,
            error: None,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CovarianceKind, RadialFamily};

    fn small() -> ExperimentConfig {
        let mut cfg =
            ExperimentConfig::new("t", RadialFamily::StudentT { nu: 8.0 }, CovarianceKind::Banded(0.3), 12, 6, 2);
        cfg.n_grid = vec![12, 20];
        cfg.estimators = "ie,me,mae,bae,mae_plugin,bae_plugin,me_ci".split(',').map(|s| s.parse().unwrap()).collect();
        cfg.replicates = 6;
        cfg.seed = 99;
        cfg
    }

    fn csv_text(records: &[ReplicateRecord]) -> String {
        let mut buf = Vec::new();
        write_records(&mut buf, records, Format::Csv).unwrap();
        String::from_utf8(buf).unwrap()
    }

    #[test]
    fn degenerate_covariance() {
        let mut cfg = ExperimentConfig::new("zero", RadialFamily::Gaussian, CovarianceKind::Zero, 5, 4, 2);
        cfg.replicates = 2;
        let out = run_experiment(&cfg, Some(1)).unwrap();
        assert_eq!(out.records.len(), 2 * 3);
        for r in &out.records {
            assert_eq!(r.theta_hat, Some(0.0));
            assert_eq!(r.sq_err, Some(r.theta_true * r.theta_true));
        }
    }

    #[test]
    fn worker_count_does_not_change_output() {
        let cfg = small();
        let a = run_experiment(&cfg, Some(1)).unwrap();
        let b = run_experiment(&cfg, Some(3)).unwrap();
        assert_eq!(csv_text(&a.records), csv_text(&b.records));
        assert_eq!(a.records.len(), 2 * 6 * 7);
        assert!(a.records.iter().all(|r| r.error.is_none()), "{:?}", a.records.iter().find_map(|r| r.error.clone()));
    }

    #[test]
    fn records_ordered_and_ci_present() {
        let out = run_experiment(&small(), None).unwrap();
        let keys: Vec<(usize, usize)> = out.records.iter().map(|r| (r.n, r.rep)).collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
        assert!(out.records.iter().filter(|r| r.estimator == "me_ci").all(|r| r.ci_hit.is_some()));
        assert!(out.records.iter().filter(|r| r.estimator != "me_ci").all(|r| r.ci_hit.is_none()));
    }

    #[test]
    fn summary_mse_matches_records() {
        let out = run_experiment(&small(), None).unwrap();
        for s in &out.summary {
            let errs: Vec<f64> = out
                .records
                .iter()
                .filter(|r| r.n == s.n && r.estimator == s.estimator)
                .filter_map(|r| r.sq_err)
                .collect();
            let mse = errs.iter().sum::<f64>() / errs.len() as f64;
            assert!((mse - s.mse).abs() <= 1e-12 * mse.max(1e-300));
        }
    }

    #[test]
    fn summary_of_hand_records() {
        let rec = |rep: usize, v: Option<f64>, hit: Option<bool>| ReplicateRecord {
            scenario: "s".into(),
            n: 10,
            p: 5,
            rep,
            estimator: "mae".into(),
            theta_hat: v,
            theta_true: 2.0,
            sq_err: v.map(|x| (x - 2.0).powi(2)),
            ci_hit: hit,
            seed: 1,
            wall_time: Duration::ZERO,
            error: v.is_none().then(|| "failed".into()),
        };
        let single = summarize(&[rec(0, Some(3.0), None)]);
        assert_eq!(single.len(), 1);
        assert_eq!((single[0].count, single[0].mse, single[0].variance), (1, 1.0, 0.0));

        let twins = summarize(&[rec(0, Some(2.5), None), rec(1, Some(2.5), None)]);
        assert_eq!(twins[0].variance, 0.0);
        assert_eq!(twins[0].mse_se, 0.0);

        let values = [1.0, 2.0, 3.5, 2.5, 1.5, 2.0, 4.0, 0.5, 2.25, 1.75];
        let mut rows: Vec<_> = values.iter().enumerate().map(|(i, v)| rec(i, Some(*v), Some(i % 3 != 0))).collect();
        rows.push(rec(10, None, None));
        let s = &summarize(&rows)[0];
        assert_eq!(s.count, 10);
        assert_eq!(s.failed, 1);
        // worked by hand: Σ(v−2)² = 10.125, Σ(v−2.1)² = 10.025
        assert!((s.mean - 2.1).abs() < 1e-12);
        assert!((s.mse - 1.0125).abs() < 1e-12);
        assert!((s.variance - 10.025 / 9.0).abs() < 1e-12);
        assert!((s.scaled_mse - 1.0125 * 50.0 / 4.0).abs() < 1e-12);
        assert!((s.coverage.unwrap() - 0.6).abs() < 1e-12);
    }

    #[test]
    fn emit_round_trip_and_formats() {
        let out = run_experiment(&small(), None).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        emit(&path, &out.records, Format::Csv).unwrap();
        let back = read_records_csv(&path).unwrap();
        assert_eq!(back.len(), out.records.len());
        for (a, b) in back.iter().zip(&out.records) {
            assert_eq!(a.theta_hat.map(f64::to_bits), b.theta_hat.map(f64::to_bits));
            assert_eq!(a.theta_true.to_bits(), b.theta_true.to_bits());
            assert_eq!((a.n, a.rep, &a.estimator, a.ci_hit, a.seed), (b.n, b.rep, &b.estimator, b.ci_hit, b.seed));
        }
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("scenario,n,p,rep,estimator,theta_hat,theta_true,sq_err,ci_hit,seed\n"));

        let jpath = dir.path().join("r.jsonl");
        emit(&jpath, &out.records[..3], Format::Jsonl).unwrap();
        let lines: Vec<serde_json::Value> =
            std::fs::read_to_string(&jpath).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        assert_eq!(lines.len(), 3);
        let keys: Vec<&String> = lines[0].as_object().unwrap().keys().collect();
        assert_eq!(keys.len(), RECORD_COLUMNS.len());

        let spath = dir.path().join("s.csv");
        emit_summary(&spath, &[], Format::Csv).unwrap();
        assert_eq!(std::fs::read_to_string(&spath).unwrap().lines().count(), 1);
    }

    #[test]
    fn robust_plugins_run() {
        let mut cfg = small();
        cfg.robust = true;
        cfg.n_grid = vec![20];
        cfg.estimators = vec![EstimatorKind::MaePlugin, EstimatorKind::BaePlugin, EstimatorKind::MarginalCi];
        let out = run_experiment(&cfg, None).unwrap();
        assert!(out.records.iter().all(|r| r.theta_hat.is_some()));
    }
}
