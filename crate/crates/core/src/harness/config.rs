//! Flat `key = value` experiment configuration.
//!
//! ```text
//! # MSE constants at desk scale
//! scenario     = const-gauss
//! family       = gaussian          # or t:4.5
//! cov.kind     = identity          # identity | zero | banded | blockdiag | file
//! cov.param    =                   # banded: ρ; blockdiag: size:ρ; file: path
//! n_grid       = 50
//! p_grid       = 100
//! m            = 2
//! estimators   = ie,mae,bae
//! R            = 5000
//! seed         = 20240601
//! robust       = off
//! blocks.method = aligned          # aligned | threshold | pairs
//! blocks.param  = 2                # block size | threshold t | pair count
//! ci.alpha     = 0.05
//! ```

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::model::{CovarianceKind, RadialFamily};
use crate::robust::{parse_tau_grid, HuberConfig};

/// What an estimator slot computes. Names without a suffix use the true
/// location/scale; `_plugin` variants use sample moments, or Huber
/// estimates when `robust = on`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EstimatorKind {
    Ideal,
    /// Marginal estimator at coordinate 1.
    Marginal,
    Mae,
    Bae,
    MarginalPlugin,
    MaePlugin,
    BaePlugin,
    /// Marginal estimator at coordinate 1 with its interval; plug-in scales
    /// and MAE plug-ins for `θ_m`, `θ_{2m}`.
    MarginalCi,
}

impl EstimatorKind {
    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Ideal => "ie",
            EstimatorKind::Marginal => "me",
            EstimatorKind::Mae => "mae",
            EstimatorKind::Bae => "bae",
            EstimatorKind::MarginalPlugin => "me_plugin",
            EstimatorKind::MaePlugin => "mae_plugin",
            EstimatorKind::BaePlugin => "bae_plugin",
            EstimatorKind::MarginalCi => "me_ci",
        }
    }

    pub fn uses_plugin(self) -> bool {
        matches!(
            self,
            EstimatorKind::MarginalPlugin
                | EstimatorKind::MaePlugin
                | EstimatorKind::BaePlugin
                | EstimatorKind::MarginalCi
        )
    }

    pub fn uses_blocks(self) -> bool {
        matches!(self, EstimatorKind::Bae | EstimatorKind::BaePlugin)
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim() {
            "ie" => EstimatorKind::Ideal,
            "me" => EstimatorKind::Marginal,
            "mae" => EstimatorKind::Mae,
            "bae" => EstimatorKind::Bae,
            "me_plugin" => EstimatorKind::MarginalPlugin,
            "mae_plugin" => EstimatorKind::MaePlugin,
            "bae_plugin" => EstimatorKind::BaePlugin,
            "me_ci" => EstimatorKind::MarginalCi,
            other => return Err(Error::Config(format!("unknown estimator {other:?}"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BlockMethod {
    /// Contiguous blocks of the given size.
    Aligned(usize),
    /// Components of `|Λ_jk| > t` on the true correlation matrix.
    Threshold(f64),
    /// This many random coordinate pairs, drawn once per grid cell.
    Pairs(usize),
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub scenario: String,
    pub family: RadialFamily,
    pub covariance: CovarianceKind,
    pub n_grid: Vec<usize>,
    pub p_grid: Vec<usize>,
    pub m: u32,
    pub estimators: Vec<EstimatorKind>,
    pub replicates: usize,
    pub seed: u64,
    pub robust: bool,
    pub huber: HuberConfig,
    pub blocks: BlockMethod,
    pub ci_alpha: f64,
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    /// A config with the given essentials and defaults elsewhere.
    pub fn new(scenario: &str, family: RadialFamily, covariance: CovarianceKind, n: usize, p: usize, m: u32) -> Self {
        ExperimentConfig {
            scenario: scenario.to_owned(),
            family,
            covariance,
            n_grid: vec![n],
            p_grid: vec![p],
            m,
            estimators: vec![EstimatorKind::Ideal, EstimatorKind::Mae, EstimatorKind::Bae],
            replicates: 200,
            seed: 1,
            robust: false,
            huber: HuberConfig::default(),
            blocks: BlockMethod::Aligned(2),
            ci_alpha: 0.05,
            out: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates < 2 {
            return Err(Error::Config(format!("R = {} (need ≥ 2)", self.replicates)));
        }
        if self.n_grid.is_empty() || self.p_grid.is_empty() {
            return Err(Error::Config("n_grid and p_grid must be nonempty".into()));
        }
        if self.n_grid.contains(&0) || self.p_grid.contains(&0) {
            return Err(Error::Config("grid values must be positive".into()));
        }
        if self.m == 0 {
            return Err(Error::Config("m must be ≥ 1".into()));
        }
        if self.estimators.is_empty() {
            return Err(Error::Config("no estimators requested".into()));
        }
        if !(self.ci_alpha > 0.0 && self.ci_alpha <= 1.0) {
            return Err(Error::Config(format!("ci.alpha = {} outside (0, 1)", self.ci_alpha)));
        }
        if self.robust {
            self.huber.validate()?;
        }
        if self.n_grid.len() * self.p_grid.len() > u32::MAX as usize || self.replicates > u32::MAX as usize {
            return Err(Error::Config("grid too large".into()));
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::new("default", RadialFamily::Gaussian, CovarianceKind::Identity, 50, 100, 2);
        let mut cov_kind = "identity".to_owned();
        let mut cov_param = String::new();
        let mut block_method = "aligned".to_owned();
        let mut block_param: Option<String> = None;
        let mut seen = std::collections::HashSet::new();

        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", lineno + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_owned()) {
                return Err(Error::Config(format!("line {}: duplicate key {key}", lineno + 1)));
            }
            let bad = |what: &str| Error::Config(format!("line {}: {key} = {value:?}: {what}", lineno + 1));
            match key {
                "scenario" => cfg.scenario = value.to_owned(),
                "family" => cfg.family = value.parse().map_err(|e: Error| bad(&e.to_string()))?,
                "cov.kind" => cov_kind = value.to_owned(),
                "cov.param" => cov_param = value.to_owned(),
                "n_grid" => cfg.n_grid = parse_list(value).map_err(|_| bad("expected a list of integers"))?,
                "p_grid" => cfg.p_grid = parse_list(value).map_err(|_| bad("expected a list of integers"))?,
                "m" => cfg.m = value.parse().map_err(|_| bad("expected a positive integer"))?,
                "estimators" => {
                    cfg.estimators = value
                        .split(',')
                        .filter(|s| !s.trim().is_empty())
                        .map(str::parse)
                        .collect::<Result<_>>()
                        .map_err(|e| bad(&e.to_string()))?
                }
                "R" => cfg.replicates = value.parse().map_err(|_| bad("expected an integer"))?,
                "seed" => cfg.seed = value.parse().map_err(|_| bad("expected an unsigned integer"))?,
                "robust" => cfg.robust = parse_switch(value).ok_or_else(|| bad("expected on/off"))?,
                "robust.tau_grid" => cfg.huber.tau_grid = parse_tau_grid(value).map_err(|e| bad(&e.to_string()))?,
                "robust.relative" => cfg.huber.relative = parse_switch(value).ok_or_else(|| bad("expected on/off"))?,
                "robust.cv_folds" => cfg.huber.cv_folds = value.parse().map_err(|_| bad("expected an integer"))?,
                "blocks.method" => block_method = value.to_owned(),
                "blocks.param" => block_param = Some(value.to_owned()),
                "ci.alpha" => cfg.ci_alpha = value.parse().map_err(|_| bad("expected a number"))?,
                "out" => cfg.out = Some(PathBuf::from(value)),
                other => return Err(Error::Config(format!("line {}: unknown key {other:?}", lineno + 1))),
            }
        }
        cfg.covariance = parse_covariance(&cov_kind, &cov_param)?;
        cfg.blocks = parse_blocks(&block_method, block_param.as_deref())?;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn parse_list(value: &str) -> std::result::Result<Vec<usize>, std::num::ParseIntError> {
    value.split(',').filter(|s| !s.trim().is_empty()).map(|s| s.trim().parse()).collect()
}

fn parse_switch(value: &str) -> Option<bool> {
    match value.to_ascii_lowercase().as_str() {
        "on" | "true" | "yes" | "1" => Some(true),
        "off" | "false" | "no" | "0" => Some(false),
        _ => None,
    }
}

fn parse_covariance(kind: &str, param: &str) -> Result<CovarianceKind> {
    let bad = |what: &str| Error::Config(format!("cov.kind = {kind}, cov.param = {param:?}: {what}"));
    Ok(match kind {
        "identity" => CovarianceKind::Identity,
        "zero" => CovarianceKind::Zero,
        "banded" => CovarianceKind::Banded(param.parse().map_err(|_| bad("expected ρ"))?),
        "blockdiag" => {
            let (k, rho) = param.split_once(':').ok_or_else(|| bad("expected size:ρ"))?;
            CovarianceKind::BlockDiag {
                block_size: k.trim().parse().map_err(|_| bad("bad block size"))?,
                rho: rho.trim().parse().map_err(|_| bad("bad ρ"))?,
            }
        }
        "file" => {
            if param.is_empty() {
                return Err(bad("expected a path"));
            }
            CovarianceKind::FromFile(PathBuf::from(param))
        }
        _ => return Err(bad("unknown covariance kind")),
    })
}

fn parse_blocks(method: &str, param: Option<&str>) -> Result<BlockMethod> {
    let bad = |what: &str| Error::Config(format!("blocks.method = {method}, blocks.param = {param:?}: {what}"));
    Ok(match method {
        "aligned" => BlockMethod::Aligned(param.map_or(Ok(2), str::parse).map_err(|_| bad("expected a block size"))?),
        "threshold" => BlockMethod::Threshold(
            param.ok_or_else(|| bad("threshold needs t"))?.parse().map_err(|_| bad("expected a number"))?,
        ),
        "pairs" => BlockMethod::Pairs(
            param.ok_or_else(|| bad("pairs needs a count"))?.parse().map_err(|_| bad("expected an integer"))?,
        ),
        _ => return Err(bad("unknown block method")),
    })
}
