//! Adaptive Huber M-estimators for means, variances and covariance entries.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use crate::blocks::BlockCollection;
use crate::error::{Error, Result};
use crate::estimators::LocationScale;
use crate::model::SampleMatrix;
use crate::rng::replicate_stream;

#[derive(Debug, Clone, PartialEq)]
pub struct HuberConfig {
    /// Candidate truncation levels, strictly increasing.
    pub tau_grid: Vec<f64>,
    pub cv_folds: usize,
    pub max_iters: usize,
    pub tol: f64,
    /// When set, grid values are multiples of a robust spread (MAD) of the
    /// transformed observations rather than absolute levels.
    pub relative: bool,
}

impl Default for HuberConfig {
    fn default() -> Self {
        HuberConfig {
            tau_grid: log_grid(3.0, 300.0, 12).expect("static grid"),
            cv_folds: 5,
            max_iters: 200,
            tol: 1e-10,
            relative: true,
        }
    }
}

impl HuberConfig {
    pub fn validate(&self) -> Result<()> {
        if self.tau_grid.is_empty() {
            return Err(Error::Config("tau grid is empty".into()));
        }
        if self.tau_grid.iter().any(|t| !(*t > 0.0) || !t.is_finite()) {
            return Err(Error::Config("tau grid values must be positive and finite".into()));
        }
        if self.tau_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("tau grid must be strictly increasing".into()));
        }
        if self.cv_folds < 2 {
            return Err(Error::Config(format!("cv_folds = {} (need ≥ 2)", self.cv_folds)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Config("tol must be positive".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::Config("max_iters must be positive".into()));
        }
        Ok(())
    }
}

/// `steps` log-spaced values from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, steps: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi >= lo && hi.is_finite()) || steps == 0 {
        return Err(Error::Config(format!("bad grid {lo}:{hi}:{steps}")));
    }
    if steps == 1 {
        return if lo == hi { Ok(vec![lo]) } else { Err(Error::Config("a one-step grid needs lo == hi".into())) };
    }
    if lo == hi {
        return Err(Error::Config("lo == hi with more than one step".into()));
    }
    let (a, b) = (lo.ln(), hi.ln());
    Ok((0..steps)
        .map(|i| if i + 1 == steps { hi } else { (a + (b - a) * i as f64 / (steps - 1) as f64).exp() })
        .collect())
}

/// Parses `lo:hi:steps`.
pub fn parse_tau_grid(text: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = text.split(':').collect();
    let bad = || Error::Config(format!("tau grid {text:?} is not lo:hi:steps"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let lo: f64 = parts[0].trim().parse().map_err(|_| bad())?;
    let hi: f64 = parts[1].trim().parse().map_err(|_| bad())?;
    let steps: usize = parts[2].trim().parse().map_err(|_| bad())?;
    log_grid(lo, hi, steps)
}

pub fn huber_loss(u: f64, tau: f64) -> f64 {
    let a = u.abs();
    if a <= tau {
        0.5 * u * u
    } else {
        tau * a - 0.5 * tau * tau
    }
}

/// Derivative of the loss, `u` clamped to `[-τ, τ]`.
pub fn huber_psi(u: f64, tau: f64) -> f64 {
    u.clamp(-tau, tau)
}

pub fn median(x: &[f64]) -> f64 {
    let mut v = x.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Minimizer of `Σ ℓ_τ(x_i − β)` by iteratively reweighted averaging,
/// started from the median.
pub fn huber_location(x: &[f64], tau: f64, config: &HuberConfig) -> Result<f64> {
    if x.is_empty() {
        return Err(Error::domain("huber_location needs at least one observation"));
    }
    if !(tau > 0.0) {
        return Err(Error::domain(format!("tau = {tau} must be positive")));
    }
    // every point in the quadratic regime at the mean: the mean is the minimizer
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    if x.iter().all(|v| (v - mean).abs() <= tau) {
        return Ok(mean);
    }
    let mut beta = median(x);
    let scale = 1.0 + beta.abs();
    for _ in 0..config.max_iters {
        let (mut num, mut den) = (0.0, 0.0);
        for &v in x {
            let r = (v - beta).abs();
            let w = if r <= tau { 1.0 } else { tau / r };
            num += w * v;
            den += w;
        }
        let next = num / den;
        let step = (next - beta).abs();
        beta = next;
        if step < config.tol * scale {
            return Ok(beta);
        }
    }
    Err(Error::NonConvergence { iterations: config.max_iters, last: beta })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HuberVariance {
    pub value: f64,
    /// `β̂ − μ̂²` fell below the floor `1e-12·max(β̂, 1)`.
    pub floored: bool,
}

/// `max(β̂ − μ̂², floor)` with `β̂` the Huber location of the squares.
pub fn huber_variance(x: &[f64], mu_hat: f64, tau: f64, config: &HuberConfig) -> Result<HuberVariance> {
    if x.len() < 2 {
        return Err(Error::domain("huber_variance needs at least two observations"));
    }
    let squares: Vec<f64> = x.iter().map(|v| v * v).collect();
    let beta = huber_location(&squares, tau, config)?;
    let floor = 1e-12 * beta.max(1.0);
    let raw = beta - mu_hat * mu_hat;
    Ok(if raw > floor {
        HuberVariance { value: raw, floored: false }
    } else {
        HuberVariance { value: floor, floored: true }
    })
}

/// `β̂ − μ̂_x μ̂_y` with `β̂` the Huber location of the products.
pub fn huber_covariance(x: &[f64], y: &[f64], mu_x: f64, mu_y: f64, tau: f64, config: &HuberConfig) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch(format!("lengths {} and {}", x.len(), y.len())));
    }
    let products: Vec<f64> = x.iter().zip(y).map(|(a, b)| a * b).collect();
    Ok(huber_location(&products, tau, config)? - mu_x * mu_y)
}

/// MAD about the median, scaled to the normal standard deviation.
pub fn robust_spread(v: &[f64]) -> f64 {
    let med = median(v);
    let dev: Vec<f64> = v.iter().map(|x| (x - med).abs()).collect();
    let mad = median(&dev) / 0.674_489_750_196_081_7;
    if mad > 0.0 {
        return mad;
    }
    let mean_abs = dev.iter().sum::<f64>() / dev.len() as f64;
    if mean_abs > 0.0 {
        mean_abs
    } else {
        1.0
    }
}

/// Absolute truncation levels the grid stands for on these observations.
pub fn absolute_grid(values: &[f64], config: &HuberConfig) -> Vec<f64> {
    if config.relative {
        let s = robust_spread(values);
        config.tau_grid.iter().map(|t| t * s).collect()
    } else {
        config.tau_grid.clone()
    }
}

/// K-fold cross-validated truncation level for `x` (location), or for the
/// products `x∘y` when `y` is given (pass `y = x` for a second moment).
///
/// Each candidate is scored by the mean squared deviation of held-out
/// observations from the fit on the remaining folds; ties go to the larger
/// level. The returned value is absolute.
pub fn cross_validate_tau<R: Rng + ?Sized>(
    x: &[f64],
    y: Option<&[f64]>,
    config: &HuberConfig,
    rng: &mut R,
) -> Result<f64> {
    config.validate()?;
    let values: Vec<f64> = match y {
        None => x.to_vec(),
        Some(y) => {
            if y.len() != x.len() {
                return Err(Error::DimensionMismatch(format!("lengths {} and {}", x.len(), y.len())));
            }
            x.iter().zip(y).map(|(a, b)| a * b).collect()
        }
    };
    let n = values.len();
    let k = config.cv_folds;
    if n < 2 * k {
        return Err(Error::domain(format!("{n} observations is too few for {k}-fold cross-validation")));
    }
    let grid = absolute_grid(&values, config);
    if grid.len() == 1 {
        return Ok(grid[0]);
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut fold_of = vec![0usize; n];
    for (pos, &i) in order.iter().enumerate() {
        fold_of[i] = pos % k;
    }
    let mut train = Vec::with_capacity(n);
    let mut best = (f64::INFINITY, grid[0]);
    for &tau in &grid {
        let mut score = 0.0;
        for f in 0..k {
            train.clear();
            train.extend((0..n).filter(|&i| fold_of[i] != f).map(|i| values[i]));
            let fit = huber_location(&train, tau, config)?;
            score += (0..n).filter(|&i| fold_of[i] == f).map(|i| (values[i] - fit).powi(2)).sum::<f64>();
        }
        score /= n as f64;
        if score <= best.0 {
            best = (score, tau);
        }
    }
    Ok(best.1)
}

/// Robust `(μ̂, diag Σ̂)` and, when `blocks` is given, the block
/// submatrices assembled entry by entry. A block that is not positive
/// definite is loaded with `λI`, `λ = |min eigenvalue| + 1e-8`.
///
/// One seed is drawn from `rng`; every coordinate and entry then has its own
/// stream so the result does not depend on the thread count.
pub fn robust_location_scale<R: Rng + ?Sized>(
    samples: &SampleMatrix,
    blocks: Option<&BlockCollection>,
    config: &HuberConfig,
    rng: &mut R,
) -> Result<LocationScale> {
    config.validate()?;
    let p = samples.p();
    let base: u64 = rng.random();

    let marginals: Vec<(f64, HuberVariance)> = (0..p)
        .into_par_iter()
        .map(|j| {
            let x = samples.column(j);
            let mut r = replicate_stream(base, 0, j as u32);
            let at = |e: Error| Error::domain(format!("coordinate {}: {e}", j + 1));
            let tau_mu = cross_validate_tau(x, None, config, &mut r).map_err(at)?;
            let mu = huber_location(x, tau_mu, config).map_err(at)?;
            let tau_var = cross_validate_tau(x, Some(x), config, &mut r).map_err(at)?;
            let var = huber_variance(x, mu, tau_var, config).map_err(at)?;
            Ok((mu, var))
        })
        .collect::<Result<_>>()?;

    let mu = DVector::from_iterator(p, marginals.iter().map(|m| m.0));
    let var = DVector::from_iterator(p, marginals.iter().map(|m| m.1.value));
    let mut flags: Vec<String> = marginals
        .iter()
        .enumerate()
        .filter(|(_, m)| m.1.floored)
        .map(|(j, _)| format!("variance floored at coordinate {}", j + 1))
        .collect();
    let mut out = LocationScale::new(mu.clone(), var.clone())?;

    if let Some(blocks) = blocks {
        let assembled: Vec<(Vec<usize>, DMatrix<f64>, Option<f64>)> = blocks
            .blocks()
            .par_iter()
            .enumerate()
            .map(|(b, block)| {
                let k = block.len();
                let mut sub = DMatrix::from_fn(k, k, |a, c| if a == c { var[block[a]] } else { 0.0 });
                for a in 0..k {
                    for c in a + 1..k {
                        let (ja, jc) = (block[a], block[c]);
                        let (x, y) = (samples.column(ja), samples.column(jc));
                        let mut r = replicate_stream(base, 1 + b as u32, (a * k + c) as u32);
                        let at = |e: Error| Error::domain(format!("entry ({},{}): {e}", ja + 1, jc + 1));
                        let tau = cross_validate_tau(x, Some(y), config, &mut r).map_err(at)?;
                        let s = huber_covariance(x, y, mu[ja], mu[jc], tau, config).map_err(at)?;
                        sub[(a, c)] = s;
                        sub[(c, a)] = s;
                    }
                }
                let mut loaded = None;
                if k > 1 {
                    let min = sub.clone().symmetric_eigen().eigenvalues.min();
                    if !(min > 0.0) {
                        let lambda = min.abs() + 1e-8;
                        for a in 0..k {
                            sub[(a, a)] += lambda;
                        }
                        loaded = Some(lambda);
                    }
                }
                Ok((block.clone(), sub, loaded))
            })
            .collect::<Result<_>>()?;
        let mut map = BTreeMap::new();
        for (block, sub, loaded) in assembled {
            if let Some(lambda) = loaded {
                let idx: Vec<String> = block.iter().map(|i| (i + 1).to_string()).collect();
                flags.push(format!("block {{{}}} loaded with λ = {lambda:.3e}", idx.join(",")));
            }
            map.insert(block, sub);
        }
        out = out.with_blocks(map)?;
    }
    out.flags = flags;
    Ok(out)
}
