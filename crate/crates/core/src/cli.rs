//! The `ellmom` command line.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::blocks::{random_pair_blocks_seeded, threshold_blocks, BlockCollection};
use crate::error::{Error, Result};
use crate::estimators::{
    bae, ideal_estimator, mae, marginal_estimator, marginal_with_mae_ci, LocationScale, MomentEstimate,
};
use crate::harness::{emit, emit_summary, run_experiment, ExperimentConfig, Format};
use crate::io::{create, fmt_f64, read_blocks_json, read_covariance_csv, read_dated_csv, read_samples_csv};
use crate::model::SampleMatrix;
use crate::realized::{run_pipeline, ArchConfig, DemeanMode, FactorSource, PanelSeries, XiPipeline};
use crate::rng::seeded;
use crate::robust::{parse_tau_grid, robust_location_scale, HuberConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_IO: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "ellmom", version, about = "Moment-parameter estimation for elliptical data")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum EstimateMethod {
    Ie,
    Marginal,
    Mae,
    Bae,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum BlockScheme {
    Threshold,
    Pairs,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate θ_m from a sample CSV (header y1..yp) and print one JSON object.
    ///
    /// Location and scale are the sample mean and 1/n covariance, or Huber
    /// estimates with --robust. The ideal estimator inverts the sample
    /// covariance and needs n > p.
    Estimate {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum)]
        method: EstimateMethod,
        #[arg(long, default_value_t = 2)]
        m: u32,
        /// Blocks JSON (one-based indices); required for bae.
        #[arg(long)]
        blocks: Option<PathBuf>,
        #[arg(long)]
        robust: bool,
        /// Relative Huber grid `lo:hi:steps`, multiples of a MAD-based spread.
        #[arg(long, default_value = "3:300:12", requires = "robust")]
        tau_grid: String,
        #[arg(long, default_value_t = 5, requires = "robust")]
        cv_folds: usize,
        /// Seed for the cross-validation fold split.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Confidence interval at level 1 − alpha (marginal only).
        #[arg(long)]
        ci: Option<f64>,
        /// Coordinate for the marginal estimator, one-based.
        #[arg(long, default_value_t = 1)]
        j: usize,
    },
    /// Build blocks from a covariance CSV and print them as JSON.
    Blocks {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum)]
        method: BlockScheme,
        /// Absolute-correlation threshold (threshold scheme).
        #[arg(long)]
        t: Option<f64>,
        /// Number of random pairs (pairs scheme).
        #[arg(long)]
        count: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Realized ξ² series from a return panel (header date,y1..yp).
    Xi {
        #[arg(long)]
        returns: PathBuf,
        /// Observed factors (header date,f1..fK).
        #[arg(long, conflicts_with = "pca")]
        factors: Option<PathBuf>,
        /// Use this many principal components as factors.
        #[arg(long)]
        pca: Option<usize>,
        #[arg(long, default_value_t = 1)]
        arch_order: usize,
        /// Centered moving-average window.
        #[arg(long)]
        smooth: Option<usize>,
        /// Subtract the trailing mean of this many rows instead of assuming zero mean.
        #[arg(long)]
        demean_window: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a Monte Carlo experiment described by a key = value config file.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Replicate records; `.jsonl` selects JSON lines, anything else CSV.
        /// Defaults to the config's `out` key.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Per-cell summary table, same format rules as --out.
        #[arg(long)]
        summary: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
    },
}

/// Exit status for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) => EXIT_CONFIG,
        Error::Io { .. } | Error::Parse { .. } => EXIT_IO,
        _ => EXIT_FAILURE,
    }
}

/// Parses `args` (including the program name), runs, and returns the exit status.
pub fn main_with_args<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            return if e.use_stderr() {
                let _ = write!(stderr, "{e}");
                EXIT_CONFIG
            } else {
                let _ = write!(stdout, "{e}");
                EXIT_OK
            };
        }
    };
    match run(cli.command, stdout) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            exit_code(&e)
        }
    }
}

pub fn run(command: Command, stdout: &mut dyn Write) -> Result<()> {
    match command {
        Command::Estimate { input, method, m, blocks, robust, tau_grid, cv_folds, seed, ci, j } => {
            let opts = EstimateOptions { method, m, blocks, robust, tau_grid, cv_folds, seed, ci, j };
            let value = estimate(&input, &opts)?;
            writeln!(stdout, "{value}").map_err(|e| Error::io("<stdout>", e))
        }
        Command::Blocks { input, method, t, count, seed, out } => {
            let sigma = read_covariance_csv(&input)?;
            let blocks = match method {
                BlockScheme::Threshold => {
                    let t = t.ok_or_else(|| Error::Config("--t is required for the threshold scheme".into()))?;
                    threshold_blocks(&sigma, t)?
                }
                BlockScheme::Pairs => {
                    let count =
                        count.ok_or_else(|| Error::Config("--count is required for the pairs scheme".into()))?;
                    random_pair_blocks_seeded(sigma.nrows(), count, seed)?
                }
            };
            let text = blocks.to_json();
            match out {
                Some(path) => std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e)),
                None => writeln!(stdout, "{text}").map_err(|e| Error::io("<stdout>", e)),
            }
        }
        Command::Xi { returns, factors, pca, arch_order, smooth, demean_window, out } => {
            xi(&returns, factors.as_deref(), pca, arch_order, smooth, demean_window, &out)
        }
        Command::Simulate { config, out, summary, workers } => {
            let text = std::fs::read_to_string(&config).map_err(|e| Error::io(&config, e))?;
            let cfg = ExperimentConfig::parse(&text)?;
            let out = out
                .or_else(|| cfg.out.clone())
                .ok_or_else(|| Error::Config("no output path: pass --out or set `out` in the config".into()))?;
            let result = run_experiment(&cfg, workers)?;
            emit(&out, &result.records, format_for(&out))?;
            if let Some(path) = summary {
                emit_summary(&path, &result.summary, format_for(&path))?;
            }
            Ok(())
        }
    }
}

fn format_for(path: &Path) -> Format {
    match path.extension().and_then(|e| e.to_str()) {
        Some("jsonl") => Format::Jsonl,
        _ => Format::Csv,
    }
}

struct EstimateOptions {
    method: EstimateMethod,
    m: u32,
    blocks: Option<PathBuf>,
    robust: bool,
    tau_grid: String,
    cv_folds: usize,
    seed: u64,
    ci: Option<f64>,
    j: usize,
}

fn estimate(input: &Path, opts: &EstimateOptions) -> Result<serde_json::Value> {
    let samples = read_samples_csv(input)?;
    let p = samples.p();
    if opts.j == 0 || opts.j > p {
        return Err(Error::Config(format!("--j must be in 1..={p}")));
    }
    if opts.ci.is_some() && !matches!(opts.method, EstimateMethod::Marginal) {
        return Err(Error::Config("--ci is only available with --method marginal".into()));
    }
    let blocks = match (&opts.blocks, opts.method) {
        (Some(path), _) => Some(read_blocks_json(path, p)?),
        (None, EstimateMethod::Bae) => return Err(Error::Config("--method bae needs --blocks".into())),
        (None, _) => None,
    };
    let block_ref = if matches!(opts.method, EstimateMethod::Bae) { blocks.as_ref() } else { None };
    let loc = location_scale(&samples, block_ref, opts)?;
    let j = opts.j - 1;
    let est: MomentEstimate = match opts.method {
        EstimateMethod::Ie => {
            let (mean, cov) = samples.moments();
            let omega = cov.try_inverse().ok_or_else(|| {
                Error::NotPositiveDefinite("sample covariance is singular; the ideal estimator needs n > p".into())
            })?;
            ideal_estimator(&samples, &mean, &omega, opts.m)?
        }
        EstimateMethod::Marginal => match opts.ci {
            Some(alpha) => marginal_with_mae_ci(&samples, j, &loc, opts.m, alpha)?,
            None => marginal_estimator(&samples, j, loc.mu_hat[j], loc.sigma_diag_hat[j], opts.m)?,
        },
        EstimateMethod::Mae => mae(&samples, &loc, opts.m)?,
        EstimateMethod::Bae => bae(&samples, blocks.as_ref().expect("checked above"), &loc, opts.m)?,
    };
    Ok(serde_json::json!({
        "method": est.method.to_string(),
        "m": est.m.get(),
        "value": est.value,
        "ci": est.ci.map(|ci| [ci.lower, ci.upper]),
        "n": samples.n(),
        "p": p,
    }))
}

fn location_scale(
    samples: &SampleMatrix,
    blocks: Option<&BlockCollection>,
    opts: &EstimateOptions,
) -> Result<LocationScale> {
    if !opts.robust {
        return LocationScale::from_sample(samples, blocks);
    }
    let config =
        HuberConfig { tau_grid: parse_tau_grid(&opts.tau_grid)?, cv_folds: opts.cv_folds, ..HuberConfig::default() };
    config.validate()?;
    let mut rng = seeded(opts.seed);
    robust_location_scale(samples, blocks, &config, &mut rng)
}

fn xi(
    returns: &Path,
    factors: Option<&Path>,
    pca: Option<usize>,
    arch_order: usize,
    smooth: Option<usize>,
    demean_window: Option<usize>,
    out: &Path,
) -> Result<()> {
    let panel_table = read_dated_csv(returns)?;
    let factor_matrix = match factors {
        Some(path) => {
            let table = read_dated_csv(path)?;
            if table.dates != panel_table.dates {
                return Err(Error::parse(path, "factor dates do not match the return panel"));
            }
            Some(table.values)
        }
        None => None,
    };
    let source = match (&factor_matrix, pca) {
        (Some(f), _) => Some(FactorSource::Observed(f.clone())),
        (None, Some(k)) => Some(FactorSource::Pca(k)),
        (None, None) => None,
    };
    let panel = PanelSeries::new(panel_table.values, factor_matrix, panel_table.dates)?;
    let cfg = XiPipeline {
        demean: demean_window.map_or(DemeanMode::Zero, DemeanMode::Window),
        factors: source,
        arch_order,
        arch: ArchConfig::default(),
        smooth,
    };
    let result = run_pipeline(&panel, &cfg)?;
    let mut w = create(out)?;
    let write = |w: &mut std::io::BufWriter<std::fs::File>| -> std::io::Result<()> {
        writeln!(w, "date,xi_sq,xi_sq_smoothed")?;
        for (t, date) in result.dates.iter().enumerate() {
            let smoothed = result.series.smoothed.as_ref().map(|s| fmt_f64(s[t])).unwrap_or_default();
            writeln!(w, "{date},{},{smoothed}", fmt_f64(result.series.xi_sq[t]))?;
        }
        w.flush()
    };
    write(&mut w).map_err(|e| Error::io(out, e))
}
