//! Point estimators of `θ_m` and the marginal confidence interval.
//!
//! All of them are studentized: each observation enters only through a
//! standardized quadratic form, so rescaling the data together with the
//! location and scatter inputs leaves every estimate unchanged.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Serialize, Serializer};

use crate::blocks::BlockCollection;
use crate::error::{Error, Result};
use crate::model::{EllipticalSpec, SampleMatrix};
use crate::special::{block_constant, marginal_constant, normal_quantile, MomentOrder};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Method {
    Ideal,
    /// Zero-based coordinate.
    Marginal(usize),
    Mae,
    /// Zero-based coordinate set.
    Blockwise(Vec<usize>),
    Bae,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Ideal => write!(f, "ie"),
            Method::Marginal(j) => write!(f, "marginal[{}]", j + 1),
            Method::Mae => write!(f, "mae"),
            Method::Blockwise(block) => {
                let idx: Vec<String> = block.iter().map(|i| (i + 1).to_string()).collect();
                write!(f, "blockwise[{}]", idx.join(","))
            }
            Method::Bae => write!(f, "bae"),
        }
    }
}

impl Serialize for Method {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConfidenceInterval {
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
    /// The plug-in variance `c_{2m}θ̂_{2m}/c_m² − θ̂_m²` came out negative
    /// and was clamped to zero.
    pub clamped: bool,
}

impl ConfidenceInterval {
    pub fn contains(&self, value: f64) -> bool {
        self.lower <= value && value <= self.upper
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentEstimate {
    pub m: MomentOrder,
    pub value: f64,
    pub method: Method,
    pub n_used: usize,
    pub ci: Option<ConfidenceInterval>,
}

impl MomentEstimate {
    fn new(m: MomentOrder, value: f64, method: Method, n_used: usize) -> Result<Self> {
        if !value.is_finite() {
            return Err(Error::domain(format!("{method} produced a non-finite value")));
        }
        Ok(MomentEstimate { m, value, method, n_used, ci: None })
    }

    /// Attaches an interval; only a marginal estimate can be its center.
    pub fn with_ci(mut self, ci: ConfidenceInterval) -> Result<Self> {
        if !matches!(self.method, Method::Marginal(_)) {
            return Err(Error::domain("confidence intervals are centered at a marginal estimate"));
        }
        self.ci = Some(ci);
        Ok(self)
    }
}

/// Location and scatter inputs, either true or estimated.
#[derive(Debug, Clone, PartialEq)]
pub struct LocationScale {
    pub mu_hat: DVector<f64>,
    pub sigma_diag_hat: DVector<f64>,
    /// Positive-definite diagonal blocks keyed by their zero-based index set.
    pub sigma_blocks_hat: Option<BTreeMap<Vec<usize>, DMatrix<f64>>>,
    pub omega_hat: Option<DMatrix<f64>>,
    /// Repairs applied while estimating (floored scales, loaded blocks).
    pub flags: Vec<String>,
}

impl LocationScale {
    pub fn new(mu_hat: DVector<f64>, sigma_diag_hat: DVector<f64>) -> Result<Self> {
        if mu_hat.len() != sigma_diag_hat.len() {
            return Err(Error::DimensionMismatch(format!(
                "location has length {}, scales {}",
                mu_hat.len(),
                sigma_diag_hat.len()
            )));
        }
        if let Some(j) = sigma_diag_hat.iter().position(|s| !(*s > 0.0) || !s.is_finite()) {
            return Err(Error::domain(format!(
                "scale for coordinate {} is {} (must be positive)",
                j + 1,
                sigma_diag_hat[j]
            )));
        }
        Ok(LocationScale { mu_hat, sigma_diag_hat, sigma_blocks_hat: None, omega_hat: None, flags: Vec::new() })
    }

    pub fn with_blocks(mut self, blocks: BTreeMap<Vec<usize>, DMatrix<f64>>) -> Result<Self> {
        for (key, sub) in &blocks {
            if sub.nrows() != key.len() || sub.ncols() != key.len() {
                return Err(Error::DimensionMismatch(format!(
                    "block {key:?} has a {}×{} matrix",
                    sub.nrows(),
                    sub.ncols()
                )));
            }
            let min = sub.clone().symmetric_eigen().eigenvalues.min();
            if !(min > 0.0) {
                return Err(Error::NotPositiveDefinite(format!(
                    "block {} has minimum eigenvalue {min:.3e}",
                    one_based(key)
                )));
            }
        }
        self.sigma_blocks_hat = Some(blocks);
        Ok(self)
    }

    pub fn with_omega(mut self, omega: DMatrix<f64>) -> Self {
        self.omega_hat = Some(omega);
        self
    }

    pub fn p(&self) -> usize {
        self.mu_hat.len()
    }

    /// Sample mean and `1/n`-normalized sample covariance entries.
    pub fn from_sample(samples: &SampleMatrix, blocks: Option<&BlockCollection>) -> Result<Self> {
        let n = samples.n() as f64;
        let p = samples.p();
        let mu = DVector::from_fn(p, |j, _| samples.column_mean(j));
        let var = DVector::from_fn(p, |j, _| samples.column(j).iter().map(|x| (x - mu[j]).powi(2)).sum::<f64>() / n);
        let out = Self::new(mu.clone(), var)?;
        match blocks {
            None => Ok(out),
            Some(blocks) => {
                let mut map = BTreeMap::new();
                for block in blocks.iter() {
                    let k = block.len();
                    let sub = DMatrix::from_fn(k, k, |a, b| {
                        let (ja, jb) = (block[a], block[b]);
                        samples
                            .column(ja)
                            .iter()
                            .zip(samples.column(jb))
                            .map(|(x, y)| (x - mu[ja]) * (y - mu[jb]))
                            .sum::<f64>()
                            / n
                    });
                    map.insert(block.to_vec(), sub);
                }
                out.with_blocks(map)
            }
        }
    }

    /// The true `(μ, diag Σ)` of a model, with its blocks when asked.
    pub fn from_spec(spec: &EllipticalSpec, blocks: Option<&BlockCollection>) -> Result<Self> {
        let out = Self::new(spec.mu().clone(), spec.sigma_diag())?;
        match blocks {
            None => Ok(out),
            Some(blocks) => {
                let map = blocks.iter().map(|b| (b.to_vec(), submatrix(spec.sigma(), b))).collect();
                out.with_blocks(map)
            }
        }
    }
}

fn one_based(block: &[usize]) -> String {
    let v: Vec<String> = block.iter().map(|i| (i + 1).to_string()).collect();
    format!("{{{}}}", v.join(","))
}

pub fn submatrix(m: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), idx.len(), |a, b| m[(idx[a], idx[b])])
}

/// `(1/(n p^m)) Σᵢ [(Yᵢ−μ)ᵀ Ω (Yᵢ−μ)]^m`.
pub fn ideal_estimator(
    samples: &SampleMatrix,
    mu: &DVector<f64>,
    omega: &DMatrix<f64>,
    m: u32,
) -> Result<MomentEstimate> {
    let order = MomentOrder::new(m)?;
    let (n, p) = (samples.n(), samples.p());
    if mu.len() != p || omega.nrows() != p || omega.ncols() != p {
        return Err(Error::DimensionMismatch(format!(
            "samples have p={p}, location {}, precision {}×{}",
            mu.len(),
            omega.nrows(),
            omega.ncols()
        )));
    }
    let mut centered = samples.data().clone();
    for (j, mut col) in centered.column_iter_mut().enumerate() {
        col.add_scalar_mut(-mu[j]);
    }
    let projected = &centered * omega;
    let mut sum = 0.0;
    for i in 0..n {
        let q: f64 = (0..p).map(|j| centered[(i, j)] * projected[(i, j)]).sum();
        sum += q.powi(m as i32);
    }
    let value = sum / (n as f64 * (p as f64).powi(m as i32));
    MomentEstimate::new(order, value, Method::Ideal, n)
}

fn marginal_sum(column: &[f64], mu_j: f64, sigma_jj: f64, m: u32) -> f64 {
    column
        .iter()
        .map(|y| {
            let z = (y - mu_j) * (y - mu_j) / sigma_jj;
            z.powi(m as i32)
        })
        .sum()
}

fn check_scale(j: usize, sigma_jj: f64) -> Result<()> {
    if !(sigma_jj > 0.0) || !sigma_jj.is_finite() {
        return Err(Error::domain(format!("scale for coordinate {} is {sigma_jj} (must be positive)", j + 1)));
    }
    Ok(())
}

/// `(1/(n c_m σ_jj^m)) Σᵢ (Y_ij − μ_j)^{2m}`, with `c_m` taken at the full
/// dimension `p`.
pub fn marginal_estimator(
    samples: &SampleMatrix,
    j: usize,
    mu_j: f64,
    sigma_jj: f64,
    m: u32,
) -> Result<MomentEstimate> {
    let order = MomentOrder::new(m)?;
    if j >= samples.p() {
        return Err(Error::DimensionMismatch(format!("coordinate {} outside 1..={}", j + 1, samples.p())));
    }
    check_scale(j, sigma_jj)?;
    let n = samples.n();
    let c_m = marginal_constant(samples.p(), m)?;
    let value = marginal_sum(samples.column(j), mu_j, sigma_jj, m) / (n as f64 * c_m);
    MomentEstimate::new(order, value, Method::Marginal(j), n)
}

/// Average of the `p` marginal estimators.
pub fn mae(samples: &SampleMatrix, loc: &LocationScale, m: u32) -> Result<MomentEstimate> {
    let order = MomentOrder::new(m)?;
    let (n, p) = (samples.n(), samples.p());
    if loc.p() != p {
        return Err(Error::DimensionMismatch(format!("samples have p={p}, location/scale {}", loc.p())));
    }
    let c_m = marginal_constant(p, m)?;
    let mut total = 0.0;
    for j in 0..p {
        let s = loc.sigma_diag_hat[j];
        check_scale(j, s)?;
        total += marginal_sum(samples.column(j), loc.mu_hat[j], s, m);
    }
    let value = total / (c_m * n as f64 * p as f64);
    MomentEstimate::new(order, value, Method::Mae, n)
}

fn condition_report(sub: &DMatrix<f64>) -> String {
    let eig = sub.clone().symmetric_eigen().eigenvalues;
    let (min, max) = (eig.min(), eig.max());
    if min > 0.0 {
        format!("condition number {:.3e}", max / min)
    } else {
        format!("eigenvalues in [{min:.3e}, {max:.3e}]")
    }
}

/// Sum over rows of `[(Y_iJ − μ_J)ᵀ Σ_JJ^{-1} (Y_iJ − μ_J)]^m` by forward
/// substitution against the Cholesky factor.
fn block_sum(
    samples: &SampleMatrix,
    block: &[usize],
    mu_block: &DVector<f64>,
    sigma_block: &DMatrix<f64>,
    m: u32,
) -> Result<f64> {
    let k = block.len();
    let chol = sigma_block.clone().cholesky().ok_or_else(|| {
        Error::NotPositiveDefinite(format!("block {}: {}", one_based(block), condition_report(sigma_block)))
    })?;
    let l = chol.l();
    let cols: Vec<&[f64]> = block.iter().map(|&j| samples.column(j)).collect();
    let mut z = vec![0.0; k];
    let mut total = 0.0;
    for i in 0..samples.n() {
        let mut q = 0.0;
        for (a, col) in cols.iter().enumerate() {
            let mut v = col[i] - mu_block[a];
            for b in 0..a {
                v -= l[(a, b)] * z[b];
            }
            v /= l[(a, a)];
            z[a] = v;
            q += v * v;
        }
        total += q.powi(m as i32);
    }
    Ok(total)
}

/// `(1/(n c*_{m,|J|})) Σᵢ [(Y_iJ − μ_J)ᵀ Σ_JJ^{-1} (Y_iJ − μ_J)]^m`.
pub fn blockwise_estimator(
    samples: &SampleMatrix,
    block: &[usize],
    mu_block: &DVector<f64>,
    sigma_block: &DMatrix<f64>,
    m: u32,
) -> Result<MomentEstimate> {
    let order = MomentOrder::new(m)?;
    let p = samples.p();
    let k = block.len();
    if k == 0 || k > p || block.iter().any(|&j| j >= p) {
        return Err(Error::InvalidBlocks(format!("block {} invalid for p={p}", one_based(block))));
    }
    if mu_block.len() != k || sigma_block.nrows() != k || sigma_block.ncols() != k {
        return Err(Error::DimensionMismatch(format!(
            "block of size {k} with location {} and matrix {}×{}",
            mu_block.len(),
            sigma_block.nrows(),
            sigma_block.ncols()
        )));
    }
    let n = samples.n();
    let c_star = block_constant(p, k, m)?;
    let value = block_sum(samples, block, mu_block, sigma_block, m)? / (n as f64 * c_star);
    MomentEstimate::new(order, value, Method::Blockwise(block.to_vec()), n)
}

/// Unweighted average of the blockwise estimators over the collection.
/// Overlapping blocks are allowed.
pub fn bae(samples: &SampleMatrix, blocks: &BlockCollection, loc: &LocationScale, m: u32) -> Result<MomentEstimate> {
    let order = MomentOrder::new(m)?;
    let p = samples.p();
    if loc.p() != p || blocks.dimension() != p {
        return Err(Error::DimensionMismatch(format!(
            "samples have p={p}, location/scale {}, blocks {}",
            loc.p(),
            blocks.dimension()
        )));
    }
    if blocks.is_empty() {
        return Err(Error::InvalidBlocks("empty block collection".into()));
    }
    let n = samples.n();
    let mut total = 0.0;
    for block in blocks.iter() {
        let mu_block = DVector::from_fn(block.len(), |a, _| loc.mu_hat[block[a]]);
        let est = if block.len() == 1 {
            let j = block[0];
            let s = loc
                .sigma_blocks_hat
                .as_ref()
                .and_then(|map| map.get(block))
                .map_or(loc.sigma_diag_hat[j], |sub| sub[(0, 0)]);
            marginal_estimator(samples, j, mu_block[0], s, m)?.value
        } else {
            let sub =
                loc.sigma_blocks_hat.as_ref().and_then(|map| map.get(block)).ok_or_else(|| {
                    Error::InvalidBlocks(format!("no scatter submatrix for block {}", one_based(block)))
                })?;
            blockwise_estimator(samples, block, &mu_block, sub, m)?.value
        };
        total += est;
    }
    MomentEstimate::new(order, total / blocks.len() as f64, Method::Bae, n)
}

/// Interval centered at the marginal estimator of coordinate `j`:
/// `θ̂ᴹ_j ± (q_{1−α/2}/√n) √(c_{2m}θ̂_{2m}/c_m² − θ̂_m²)`.
///
/// `alpha = 1` is accepted and yields the zero-width interval.
#[allow(clippy::too_many_arguments)]
pub fn confidence_interval(
    samples: &SampleMatrix,
    j: usize,
    mu_j: f64,
    sigma_jj: f64,
    m: u32,
    theta_hat_m: f64,
    theta_hat_2m: f64,
    alpha: f64,
) -> Result<MomentEstimate> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::domain(format!("alpha {alpha} outside (0, 1)")));
    }
    if !(theta_hat_2m >= 0.0) {
        return Err(Error::domain(format!("θ̂_2m = {theta_hat_2m} must be nonnegative")));
    }
    let center = marginal_estimator(samples, j, mu_j, sigma_jj, m)?;
    let p = samples.p();
    let c_m = marginal_constant(p, m)?;
    let c_2m = marginal_constant(p, 2 * m)?;
    let radicand = c_2m / (c_m * c_m) * theta_hat_2m - theta_hat_m * theta_hat_m;
    let clamped = radicand < 0.0;
    let q = if alpha == 1.0 { 0.0 } else { normal_quantile(1.0 - alpha / 2.0)? };
    let half = q / (samples.n() as f64).sqrt() * radicand.max(0.0).sqrt();
    let ci = ConfidenceInterval { lower: center.value - half, upper: center.value + half, level: 1.0 - alpha, clamped };
    center.with_ci(ci)
}

/// Confidence interval with the `θ_m`, `θ_{2m}` plug-ins taken from MAE on
/// the same location/scale inputs.
pub fn marginal_with_mae_ci(
    samples: &SampleMatrix,
    j: usize,
    loc: &LocationScale,
    m: u32,
    alpha: f64,
) -> Result<MomentEstimate> {
    if j >= loc.p() {
        return Err(Error::DimensionMismatch(format!("coordinate {} outside 1..={}", j + 1, loc.p())));
    }
    let theta_m = mae(samples, loc, m)?.value;
    let theta_2m = mae(samples, loc, 2 * m)?.value;
    confidence_interval(samples, j, loc.mu_hat[j], loc.sigma_diag_hat[j], m, theta_m, theta_2m, alpha)
}
