//! Realized radial path of a factor-adjusted return panel.
//!
//! The pipeline demeans the returns, removes observed or PCA factors, fits
//! an ARCH model to every residual coordinate, and aggregates the
//! standardized squared residuals into `ξ̂²_t = Σ_j Ẑ²_t(j)/λ̂²_t(j)`.
//! A kernel-weighted MAE gives the matching time-local `θ̂_{m,t}`.

mod arch;

pub use arch::{arch_fit, ArchConfig, ArchFit};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimators::LocationScale;
use crate::model::{sample_radial, sample_sphere, RadialFamily, SampleMatrix};
use crate::special::marginal_constant;

#[derive(Debug, Clone, PartialEq)]
pub struct PanelSeries {
    /// `T × p`.
    pub returns: DMatrix<f64>,
    /// `T × K` observed factors.
    pub factors: Option<DMatrix<f64>>,
    pub timestamps: Vec<String>,
}

impl PanelSeries {
    pub fn new(returns: DMatrix<f64>, factors: Option<DMatrix<f64>>, timestamps: Vec<String>) -> Result<Self> {
        let t = returns.nrows();
        if t == 0 || returns.ncols() == 0 {
            return Err(Error::domain("empty return panel"));
        }
        if let Some((i, j)) = first_nonfinite(&returns) {
            return Err(Error::domain(format!("missing or non-finite return at row {}, column {}", i + 1, j + 1)));
        }
        if timestamps.len() != t {
            return Err(Error::DimensionMismatch(format!("{} timestamps for {t} rows", timestamps.len())));
        }
        if let Some(f) = &factors {
            if f.nrows() != t {
                return Err(Error::DimensionMismatch(format!("factors have {} rows, returns {t}", f.nrows())));
            }
            if let Some((i, j)) = first_nonfinite(f) {
                return Err(Error::domain(format!("missing or non-finite factor at row {}, column {}", i + 1, j + 1)));
            }
        }
        Ok(PanelSeries { returns, factors, timestamps })
    }

    /// Timestamps `1..=T` when the data carry none.
    pub fn undated(returns: DMatrix<f64>, factors: Option<DMatrix<f64>>) -> Result<Self> {
        let ts = (1..=returns.nrows()).map(|t| t.to_string()).collect();
        Self::new(returns, factors, ts)
    }

    pub fn len(&self) -> usize {
        self.returns.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.returns.nrows() == 0
    }

    pub fn p(&self) -> usize {
        self.returns.ncols()
    }
}

fn first_nonfinite(m: &DMatrix<f64>) -> Option<(usize, usize)> {
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            if !m[(i, j)].is_finite() {
                return Some((i, j));
            }
        }
    }
    None
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DemeanMode {
    Zero,
    /// Subtract the average of the previous `w` rows (fewer at the start;
    /// the first row is left as is).
    Window(usize),
}

pub fn demean(panel: &PanelSeries, mode: DemeanMode) -> Result<DMatrix<f64>> {
    match mode {
        DemeanMode::Zero => Ok(panel.returns.clone()),
        DemeanMode::Window(w) => {
            let t_len = panel.len();
            if w == 0 || w > t_len {
                return Err(Error::domain(format!("window {w} outside 1..={t_len}")));
            }
            let y = &panel.returns;
            let mut out = y.clone();
            for j in 0..y.ncols() {
                let mut sum = 0.0;
                for t in 0..t_len {
                    let count = t.min(w);
                    if count > 0 {
                        out[(t, j)] = y[(t, j)] - sum / count as f64;
                    }
                    sum += y[(t, j)];
                    if t >= w {
                        sum -= y[(t - w, j)];
                    }
                }
            }
            Ok(out)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FactorSource {
    Observed(DMatrix<f64>),
    Pca(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FactorAdjustment {
    /// `p × K`.
    pub loadings: DMatrix<f64>,
    /// `T × K` factors used (observed, or principal-component scores).
    pub factors: DMatrix<f64>,
    /// `T × p`.
    pub residuals: DMatrix<f64>,
}

/// `(FᵀF)^{-1}FᵀY` for every column of `y`, transposed to `p × K`.
fn regress(y: &DMatrix<f64>, f: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let svd = f.clone().svd(true, true);
    let s = &svd.singular_values;
    let max = s.max();
    let min = s.min();
    if !(max > 0.0) || min <= 1e-10 * max * (f.nrows().max(f.ncols()) as f64) {
        return Err(Error::RankDeficient(format!(
            "factor matrix {}×{} has singular values in [{min:.3e}, {max:.3e}]",
            f.nrows(),
            f.ncols()
        )));
    }
    let coef = svd.solve(y, 0.0).map_err(|e| Error::RankDeficient(e.to_string()))?;
    Ok(coef.transpose())
}

pub fn factor_adjust(demeaned: &DMatrix<f64>, source: &FactorSource) -> Result<FactorAdjustment> {
    let (t_len, p) = (demeaned.nrows(), demeaned.ncols());
    let factors = match source {
        FactorSource::Observed(f) => {
            if f.nrows() != t_len {
                return Err(Error::DimensionMismatch(format!("factors have {} rows, returns {t_len}", f.nrows())));
            }
            if f.ncols() == 0 {
                return Err(Error::RankDeficient("no factor columns".into()));
            }
            f.clone()
        }
        FactorSource::Pca(k) => {
            let k = *k;
            if k == 0 || k >= t_len.min(p) {
                return Err(Error::domain(format!("PCA factor count {k} must lie in 1..{}", t_len.min(p))));
            }
            pca_scores(demeaned, k)?
        }
    };
    let loadings = regress(demeaned, &factors)?;
    let residuals = demeaned - &factors * loadings.transpose();
    Ok(FactorAdjustment { loadings, factors, residuals })
}

/// Top-`k` principal-component scores of the uncentered second-moment
/// matrix, via whichever of `YYᵀ` and `YᵀY` is smaller.
fn pca_scores(y: &DMatrix<f64>, k: usize) -> Result<DMatrix<f64>> {
    let (t_len, p) = (y.nrows(), y.ncols());
    let small_time = t_len <= p;
    let gram = if small_time { y * y.transpose() } else { y.transpose() * y };
    let eig = gram.symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let top = eig.eigenvalues[order[0]];
    let kth = eig.eigenvalues[order[k - 1]];
    if !(kth > 1e-12 * top.max(f64::MIN_POSITIVE)) {
        return Err(Error::RankDeficient(format!("panel has fewer than {k} nonzero principal components")));
    }
    let mut scores = DMatrix::zeros(t_len, k);
    for (c, &idx) in order.iter().take(k).enumerate() {
        let v = eig.eigenvectors.column(idx);
        if small_time {
            // left singular vector times singular value
            scores.set_column(c, &(v * eig.eigenvalues[idx].sqrt()));
        } else {
            scores.set_column(c, &(y * v));
        }
    }
    Ok(scores)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RealizedXiSeries {
    /// `ξ̂²_t` for `t = k+1..T`.
    pub xi_sq: Vec<f64>,
    pub smoothing_window: Option<usize>,
    pub smoothed: Option<Vec<f64>>,
}

impl RealizedXiSeries {
    pub fn with_smoothing(mut self, w: usize) -> Result<Self> {
        self.smoothed = Some(smooth(&self.xi_sq, w)?);
        self.smoothing_window = Some(w);
        Ok(self)
    }
}

/// `ξ̂²_t = Σ_j Ẑ²_t(j)/Σ̂_t(j,j)`, summed in ascending `j`.
pub fn realized_xi(residuals: &DMatrix<f64>, variances: &DMatrix<f64>) -> Result<RealizedXiSeries> {
    if residuals.shape() != variances.shape() {
        return Err(Error::DimensionMismatch(format!(
            "residuals {:?} vs variances {:?}",
            residuals.shape(),
            variances.shape()
        )));
    }
    let (t_len, p) = residuals.shape();
    let mut xi_sq = Vec::with_capacity(t_len);
    for t in 0..t_len {
        let mut s = 0.0;
        for j in 0..p {
            let v = variances[(t, j)];
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::domain(format!("variance {v} at t = {}, coordinate {}", t + 1, j + 1)));
            }
            let z = residuals[(t, j)];
            s += z * z / v;
        }
        xi_sq.push(s);
    }
    Ok(RealizedXiSeries { xi_sq, smoothing_window: None, smoothed: None })
}

/// Centered moving average of width `w`; near the ends the window is cut
/// to the available points.
pub fn smooth(series: &[f64], w: usize) -> Result<Vec<f64>> {
    let n = series.len();
    if w == 0 || w > n {
        return Err(Error::domain(format!("window {w} outside 1..={n}")));
    }
    let mut prefix = vec![0.0; n + 1];
    for (i, x) in series.iter().enumerate() {
        prefix[i + 1] = prefix[i] + x;
    }
    let left = (w - 1) / 2;
    let right = w / 2;
    Ok((0..n)
        .map(|t| {
            let lo = t.saturating_sub(left);
            let hi = (t + right).min(n - 1);
            (prefix[hi + 1] - prefix[lo]) / (hi + 1 - lo) as f64
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct XiPipeline {
    pub demean: DemeanMode,
    pub factors: Option<FactorSource>,
    pub arch_order: usize,
    pub arch: ArchConfig,
    pub smooth: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct XiOutput {
    pub series: RealizedXiSeries,
    /// Timestamps aligned with `series.xi_sq`.
    pub dates: Vec<String>,
    pub fits: Vec<ArchFit>,
    pub adjustment: Option<FactorAdjustment>,
}

pub fn run_pipeline(panel: &PanelSeries, cfg: &XiPipeline) -> Result<XiOutput> {
    let k_factors = match &cfg.factors {
        Some(FactorSource::Observed(f)) => f.ncols(),
        Some(FactorSource::Pca(k)) => *k,
        None => 0,
    };
    if panel.len() <= k_factors + 2 * cfg.arch_order {
        return Err(Error::domain(format!(
            "T = {} must exceed K + 2·order = {}",
            panel.len(),
            k_factors + 2 * cfg.arch_order
        )));
    }
    let y = demean(panel, cfg.demean)?;
    let (residuals, adjustment) = match &cfg.factors {
        None => (y, None),
        Some(src) => {
            let adj = factor_adjust(&y, src)?;
            (adj.residuals.clone(), Some(adj))
        }
    };
    let k = cfg.arch_order;
    let fits: Vec<ArchFit> = (0..residuals.ncols())
        .into_par_iter()
        .map(|j| {
            let z: Vec<f64> = residuals.column(j).iter().copied().collect();
            arch_fit(&z, k, &cfg.arch).map_err(|e| Error::domain(format!("ARCH fit for coordinate {}: {e}", j + 1)))
        })
        .collect::<Result<_>>()?;
    let t_fit = residuals.nrows() - k;
    let z_tail = residuals.rows(k, t_fit).into_owned();
    let var = DMatrix::from_fn(t_fit, fits.len(), |t, j| fits[j].lambda_sq[t]);
    let mut series = realized_xi(&z_tail, &var)?;
    if let Some(w) = cfg.smooth {
        series = series.with_smoothing(w)?;
    }
    Ok(XiOutput { series, dates: panel.timestamps[k..].to_vec(), fits, adjustment })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kernel {
    Boxcar,
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Centered,
    /// Only the past and present.
    Left,
    /// Only the present and future.
    Right,
}

/// Kernel-weighted MAE over time:
/// `θ̂_{m,t} = Σ_s K_h(s−t) a_s / Σ_s K_h(s−t)` with
/// `a_s = p⁻¹ Σ_j (Y_sj − μ̂_j)^{2m} / (c_m σ̂_jj^m)`.
pub fn kernel_theta(
    samples: &SampleMatrix,
    loc: &LocationScale,
    m: u32,
    kernel: Kernel,
    h: f64,
    side: Side,
) -> Result<Vec<f64>> {
    if !(h > 0.0) {
        return Err(Error::domain(format!("bandwidth {h} must be positive")));
    }
    let (t_len, p) = (samples.n(), samples.p());
    if loc.p() != p {
        return Err(Error::DimensionMismatch(format!("samples have p={p}, location/scale {}", loc.p())));
    }
    let c_m = marginal_constant(p, m)?;
    let mut per_time = vec![0.0; t_len];
    for j in 0..p {
        let (mu, s) = (loc.mu_hat[j], loc.sigma_diag_hat[j]);
        for (t, y) in samples.column(j).iter().enumerate() {
            per_time[t] += ((y - mu) * (y - mu) / s).powi(m as i32);
        }
    }
    per_time.iter_mut().for_each(|a| *a /= c_m * p as f64);

    let reach = match kernel {
        Kernel::Boxcar => h.floor(),
        Kernel::Gaussian => (8.0 * h).ceil(),
    }
    .min(t_len as f64) as usize;
    let (back, fwd) = match side {
        Side::Centered => (reach, reach),
        Side::Left => (reach, 0),
        Side::Right => (0, reach),
    };
    let weight = |d: usize| match kernel {
        Kernel::Boxcar => 1.0,
        Kernel::Gaussian => (-0.5 * (d as f64 / h).powi(2)).exp(),
    };
    Ok((0..t_len)
        .map(|t| {
            let lo = t.saturating_sub(back);
            let hi = (t + fwd).min(t_len - 1);
            let (mut num, mut den) = (0.0, 0.0);
            for (s, a) in per_time.iter().enumerate().take(hi + 1).skip(lo) {
                let w = weight(s.abs_diff(t));
                num += w * a;
                den += w;
            }
            num / den
        })
        .collect())
}

/// Settings for a simulated factor panel with diagonal ARCH(1)
/// idiosyncratic volatility.
#[derive(Debug, Clone)]
pub struct FactorPanelSim {
    pub t: usize,
    pub p: usize,
    pub factors: usize,
    pub family: RadialFamily,
    pub a0: f64,
    pub a1: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedPanel {
    pub panel: PanelSeries,
    pub loadings: DMatrix<f64>,
    /// True `ξ²_t`, `t = 1..T`.
    pub xi_sq: Vec<f64>,
    /// True conditional variances `λ²_t(j)`, `T × p`.
    pub variances: DMatrix<f64>,
}

/// `Y_t = B f_t + Z_t`, `Z_t = ξ_t diag(λ_t) U_t`, with
/// `λ²_t(j) = a₀ + a₁ Z²_{t−1}(j)` and standard normal factors and loadings.
pub fn simulate_factor_panel<R: Rng + ?Sized>(sim: &FactorPanelSim, rng: &mut R) -> Result<SimulatedPanel> {
    let FactorPanelSim { t, p, factors: k, a0, a1, .. } = *sim;
    if t == 0 || p == 0 {
        return Err(Error::domain("empty panel"));
    }
    if !(a0 > 0.0) || !(0.0..1.0).contains(&a1) {
        return Err(Error::domain(format!("ARCH parameters ({a0}, {a1}) need a0 > 0, 0 ≤ a1 < 1")));
    }
    let loadings = DMatrix::from_fn(p, k, |_, _| StandardNormal.sample(rng));
    let f = DMatrix::from_fn(t, k, |_, _| StandardNormal.sample(rng));
    let mut z = DMatrix::zeros(t, p);
    let mut var = DMatrix::zeros(t, p);
    let mut xi_sq = Vec::with_capacity(t);
    let start = a0 / (1.0 - a1);
    for s in 0..t {
        let xi = sample_radial(&sim.family, p, rng)?;
        let u: DVector<f64> = sample_sphere(p, rng)?;
        xi_sq.push(xi * xi);
        for j in 0..p {
            let prev = if s == 0 { start } else { z[(s - 1, j)] * z[(s - 1, j)] };
            let v = a0 + a1 * prev;
            var[(s, j)] = v;
            z[(s, j)] = xi * v.sqrt() * u[j];
        }
    }
    let returns = &f * loadings.transpose() + &z;
    let panel = PanelSeries::undated(returns, Some(f))?;
    Ok(SimulatedPanel { panel, loadings, xi_sq, variances: var })
}

/// Pearson correlation.
pub fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len()) as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    sab / (saa * sbb).sqrt()
}
