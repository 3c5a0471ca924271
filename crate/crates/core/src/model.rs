//! The elliptical model `Y = μ + ξ Σ^{1/2} U` and its samplers.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::{Arc, OnceLock};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore};
use rand_distr::{ChiSquared, Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::special::{radial_moment_ratio, MomentOrder};

type RadialSampler = dyn Fn(&mut dyn RngCore, usize) -> f64 + Send + Sync;
type RadialMoment = dyn Fn(usize, u32) -> f64 + Send + Sync;

/// A user-provided radial law.
#[derive(Clone)]
pub struct CustomRadial {
    pub name: String,
    /// Draws ξ for dimension `p`; must satisfy `E ξ² = p`.
    pub sampler: Arc<RadialSampler>,
    /// Largest `k` with `E ξ^{2k}` finite.
    pub max_finite_moment: u32,
    /// `E ξ^{2k}` for dimension `p`, when known in closed form.
    pub even_moment: Option<Arc<RadialMoment>>,
}

impl fmt::Debug for CustomRadial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomRadial")
            .field("name", &self.name)
            .field("max_finite_moment", &self.max_finite_moment)
            .field("has_closed_form", &self.even_moment.is_some())
            .finish()
    }
}

#[derive(Debug, Clone)]
pub enum RadialFamily {
    Gaussian,
    /// Multivariate t with `nu > 2` degrees of freedom, normalized so that
    /// `E ξ² = p`.
    StudentT {
        nu: f64,
    },
    Custom(CustomRadial),
}

impl RadialFamily {
    pub fn student_t(nu: f64) -> Result<Self> {
        if !(nu > 2.0) || !nu.is_finite() {
            return Err(Error::domain(format!("Student t needs nu > 2, got {nu}")));
        }
        Ok(RadialFamily::StudentT { nu })
    }

    /// Largest `k` for which `E ξ^{2k}` is finite, `None` when unbounded.
    pub fn max_finite_moment(&self) -> Option<u32> {
        match self {
            RadialFamily::Gaussian => None,
            RadialFamily::StudentT { nu } => {
                let half = nu / 2.0;
                let k = half.ceil() as u32 - 1;
                Some(k)
            }
            RadialFamily::Custom(c) => Some(c.max_finite_moment),
        }
    }
}

impl fmt::Display for RadialFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RadialFamily::Gaussian => write!(f, "gaussian"),
            RadialFamily::StudentT { nu } => write!(f, "t:{nu}"),
            RadialFamily::Custom(c) => write!(f, "custom:{}", c.name),
        }
    }
}

impl FromStr for RadialFamily {
    type Err = Error;

    /// `gaussian`, `normal`, or `t:<nu>`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        if s == "gaussian" || s == "normal" {
            return Ok(RadialFamily::Gaussian);
        }
        let nu = s
            .strip_prefix("t:")
            .or_else(|| s.strip_prefix("t(").and_then(|r| r.strip_suffix(')')))
            .ok_or_else(|| Error::Config(format!("unknown family '{s}'")))?;
        let nu: f64 = nu.parse().map_err(|_| Error::Config(format!("bad degrees of freedom '{nu}'")))?;
        RadialFamily::student_t(nu)
    }
}

/// An `n × p` matrix of observations, one row per draw.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleMatrix {
    data: DMatrix<f64>,
}

impl SampleMatrix {
    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(Error::DimensionMismatch("sample matrix must be at least 1×1".into()));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            let (col, row) = (pos / data.nrows(), pos % data.nrows());
            return Err(Error::domain(format!("non-finite entry at row {}, column {}", row + 1, col + 1)));
        }
        Ok(SampleMatrix { data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let p = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != p) {
            return Err(Error::DimensionMismatch("ragged rows".into()));
        }
        Self::new(DMatrix::from_fn(n, p, |i, j| rows[i][j]))
    }

    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    pub fn p(&self) -> usize {
        self.data.ncols()
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.data
    }

    pub fn column(&self, j: usize) -> &[f64] {
        let n = self.n();
        &self.data.as_slice()[j * n..(j + 1) * n]
    }

    pub fn column_mean(&self, j: usize) -> f64 {
        let c = self.column(j);
        c.iter().sum::<f64>() / c.len() as f64
    }

    /// `1/n`-normalized sample mean vector and covariance.
    pub fn moments(&self) -> (DVector<f64>, DMatrix<f64>) {
        let n = self.n() as f64;
        let mean = DVector::from_fn(self.p(), |j, _| self.column_mean(j));
        let mut centered = self.data.clone();
        for (j, mut col) in centered.column_iter_mut().enumerate() {
            col.add_scalar_mut(-mean[j]);
        }
        let cov = centered.transpose() * &centered / n;
        (mean, cov)
    }
}

/// The generative model: dimension, location, scatter and radial law.
#[derive(Debug)]
pub struct EllipticalSpec {
    mu: DVector<f64>,
    sigma: DMatrix<f64>,
    family: RadialFamily,
    sigma_sqrt: DMatrix<f64>,
    diagonal: bool,
    correlation: DMatrix<f64>,
    omega: OnceLock<std::result::Result<DMatrix<f64>, String>>,
}

impl EllipticalSpec {
    pub fn new(mu: DVector<f64>, sigma: DMatrix<f64>, family: RadialFamily) -> Result<Self> {
        let p = mu.len();
        if p == 0 {
            return Err(Error::DimensionMismatch("dimension must be >= 1".into()));
        }
        if sigma.nrows() != p || sigma.ncols() != p {
            return Err(Error::DimensionMismatch(format!(
                "covariance is {}×{} but mean has length {p}",
                sigma.nrows(),
                sigma.ncols()
            )));
        }
        if mu.iter().chain(sigma.iter()).any(|v| !v.is_finite()) {
            return Err(Error::domain("non-finite parameter"));
        }
        let scale = sigma.amax().max(1.0);
        for i in 0..p {
            for j in (i + 1)..p {
                if (sigma[(i, j)] - sigma[(j, i)]).abs() > 1e-10 * scale {
                    return Err(Error::domain(format!("covariance not symmetric at ({}, {})", i + 1, j + 1)));
                }
            }
        }
        let sigma = (&sigma + sigma.transpose()) * 0.5;

        let diagonal = (0..p).all(|i| (0..p).all(|j| i == j || sigma[(i, j)] == 0.0));
        let sigma_sqrt = if diagonal {
            if let Some(i) = (0..p).find(|&i| sigma[(i, i)] < -1e-10 * scale) {
                return Err(Error::NotPositiveDefinite(format!("diagonal entry {} is {}", i + 1, sigma[(i, i)])));
            }
            DMatrix::from_diagonal(&DVector::from_fn(p, |i, _| sigma[(i, i)].max(0.0).sqrt()))
        } else {
            psd_sqrt(&sigma)?
        };

        let sd: Vec<f64> = (0..p).map(|i| sigma[(i, i)].max(0.0).sqrt()).collect();
        let correlation = DMatrix::from_fn(p, p, |i, j| {
            if i == j {
                1.0
            } else if sd[i] > 0.0 && sd[j] > 0.0 {
                sigma[(i, j)] / (sd[i] * sd[j])
            } else {
                0.0
            }
        });

        Ok(EllipticalSpec { mu, sigma, family, sigma_sqrt, diagonal, correlation, omega: OnceLock::new() })
    }

    pub fn p(&self) -> usize {
        self.mu.len()
    }

    pub fn mu(&self) -> &DVector<f64> {
        &self.mu
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn sigma_sqrt(&self) -> &DMatrix<f64> {
        &self.sigma_sqrt
    }

    pub fn family(&self) -> &RadialFamily {
        &self.family
    }

    pub fn correlation(&self) -> &DMatrix<f64> {
        &self.correlation
    }

    pub fn sigma_diag(&self) -> DVector<f64> {
        self.sigma.diagonal()
    }

    /// `‖Λ − I‖_F²`.
    pub fn correlation_offdiag_sq(&self) -> f64 {
        let p = self.p();
        let mut s = 0.0;
        for i in 0..p {
            for j in 0..p {
                if i != j {
                    s += self.correlation[(i, j)].powi(2);
                }
            }
        }
        s
    }

    /// `Ω = Σ^{-1}`, computed once on first use.
    pub fn precision(&self) -> Result<&DMatrix<f64>> {
        let cached = self.omega.get_or_init(|| {
            self.sigma
                .clone()
                .cholesky()
                .map(|c| c.inverse())
                .ok_or_else(|| "covariance is singular; no precision matrix".to_string())
        });
        cached.as_ref().map_err(|e| Error::NotPositiveDefinite(e.clone()))
    }

    pub fn theta(&self, m: u32) -> Result<f64> {
        theoretical_theta(&self.family, self.p(), m)
    }
}

/// Symmetric PSD square root by eigendecomposition; eigenvalues below
/// `1e-12 · λ_max` are set to zero.
pub fn psd_sqrt(sigma: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = sigma.clone().symmetric_eigen();
    let max = eig.eigenvalues.max().max(0.0);
    let scale = sigma.amax().max(1.0);
    let min = eig.eigenvalues.min();
    if min < -1e-10 * scale {
        return Err(Error::NotPositiveDefinite(format!("minimum eigenvalue {min:.6e} (maximum {max:.6e})")));
    }
    let roots = eig.eigenvalues.map(|l| if l <= 1e-12 * max { 0.0 } else { l.sqrt() });
    let v = &eig.eigenvectors;
    Ok(v * DMatrix::from_diagonal(&roots) * v.transpose())
}

/// `θ_m = p^{-m} E ξ^{2m}`.
pub fn theoretical_theta(family: &RadialFamily, p: usize, m: u32) -> Result<f64> {
    let m = MomentOrder::new(m)?.get();
    if p == 0 {
        return Err(Error::domain("p must be >= 1"));
    }
    let pf = p as f64;
    let gaussian: f64 = (0..m).map(|j| 1.0 + 2.0 * j as f64 / pf).product();
    if m == 1 {
        return match family {
            RadialFamily::Custom(c) if c.max_finite_moment < 1 => {
                Err(Error::MomentNonexistence { family: family.to_string(), order: 2 })
            }
            _ => Ok(1.0),
        };
    }
    match family {
        RadialFamily::Gaussian => Ok(gaussian),
        _ => Ok(gaussian * radial_moment_ratio(family, p, m)?),
    }
}

fn standard_normal_vec<R: Rng + ?Sized>(p: usize, rng: &mut R, out: &mut [f64]) -> f64 {
    loop {
        let mut norm_sq = 0.0;
        for slot in out.iter_mut().take(p) {
            let g: f64 = StandardNormal.sample(rng);
            *slot = g;
            norm_sq += g * g;
        }
        if norm_sq > 0.0 {
            return norm_sq;
        }
    }
}

/// A point uniform on the unit sphere `S^{p-1}`.
pub fn sample_sphere<R: Rng + ?Sized>(p: usize, rng: &mut R) -> Result<DVector<f64>> {
    if p == 0 {
        return Err(Error::domain("p must be >= 1"));
    }
    let mut g = vec![0.0; p];
    let norm = standard_normal_vec(p, rng, &mut g).sqrt();
    Ok(DVector::from_iterator(p, g.into_iter().map(|x| x / norm)))
}

/// One draw of ξ with `E ξ² = p`.
pub fn sample_radial<R: Rng + ?Sized>(family: &RadialFamily, p: usize, rng: &mut R) -> Result<f64> {
    if p == 0 {
        return Err(Error::domain("p must be >= 1"));
    }
    let chi_p = ChiSquared::new(p as f64).map_err(|e| Error::domain(e.to_string()))?;
    match family {
        RadialFamily::Gaussian => Ok(chi_p.sample(rng).sqrt()),
        RadialFamily::StudentT { nu } => {
            let chi_nu = ChiSquared::new(*nu).map_err(|e| Error::domain(e.to_string()))?;
            let num = chi_p.sample(rng);
            let den = chi_nu.sample(rng);
            Ok(((nu - 2.0) * num / den).sqrt())
        }
        RadialFamily::Custom(c) => {
            let mut r = rng;
            Ok((c.sampler)(&mut r, p))
        }
    }
}

/// `n` i.i.d. rows of the model together with the drawn `ξᵢ²`.
///
/// A Gaussian vector `g` is split as `‖g‖ · g/‖g‖`, so for the Gaussian
/// family `ξ = ‖g‖`, and for the t family `ξ² = (ν−2)‖g‖²/χ²_ν`, which
/// reuses the same χ²_p draw. Other families draw ξ separately.
pub fn sample_with_radii<R: Rng + ?Sized>(
    spec: &EllipticalSpec,
    n: usize,
    rng: &mut R,
) -> Result<(SampleMatrix, Vec<f64>)> {
    if n == 0 {
        return Err(Error::domain("n must be >= 1"));
    }
    let p = spec.p();
    let chi_nu = match spec.family {
        RadialFamily::StudentT { nu } => Some(ChiSquared::new(nu).map_err(|e| Error::domain(e.to_string()))?),
        _ => None,
    };
    // scaled directions, row-major n × p
    let mut rows = vec![0.0; n * p];
    let mut xi_sq = Vec::with_capacity(n);
    for i in 0..n {
        let row = &mut rows[i * p..(i + 1) * p];
        let norm_sq = standard_normal_vec(p, rng, row);
        let factor = match &spec.family {
            RadialFamily::Gaussian => {
                xi_sq.push(norm_sq);
                1.0
            }
            RadialFamily::StudentT { nu } => {
                let den = chi_nu.as_ref().expect("t family has χ²_ν").sample(rng);
                let xs = (nu - 2.0) * norm_sq / den;
                xi_sq.push(xs);
                ((nu - 2.0) / den).sqrt()
            }
            RadialFamily::Custom(c) => {
                let mut r = &mut *rng;
                let xi = (c.sampler)(&mut r, p);
                xi_sq.push(xi * xi);
                xi / norm_sq.sqrt()
            }
        };
        if factor != 1.0 {
            row.iter_mut().for_each(|v| *v *= factor);
        }
    }
    let scaled = DMatrix::from_row_slice(n, p, &rows);
    let mut data = if spec.diagonal {
        let mut d = scaled;
        for (j, mut col) in d.column_iter_mut().enumerate() {
            col *= spec.sigma_sqrt[(j, j)];
        }
        d
    } else {
        // rows are uᵀ ξ; (Σ^{1/2} u)ᵀ = uᵀ Σ^{1/2} since the root is symmetric
        scaled * &spec.sigma_sqrt
    };
    for (j, mut col) in data.column_iter_mut().enumerate() {
        col.add_scalar_mut(spec.mu[j]);
    }
    Ok((SampleMatrix::new(data)?, xi_sq))
}

pub fn sample<R: Rng + ?Sized>(spec: &EllipticalSpec, n: usize, rng: &mut R) -> Result<SampleMatrix> {
    sample_with_radii(spec, n, rng).map(|(s, _)| s)
}

#[derive(Debug, Clone, PartialEq)]
pub enum CovarianceKind {
    Identity,
    /// All-zero scatter: every draw equals the mean.
    Zero,
    /// `Σ_ij = a^{|i-j|}`.
    Banded(f64),
    /// Unit diagonal blocks of the given size with constant off-diagonal.
    BlockDiag {
        block_size: usize,
        rho: f64,
    },
    FromFile(PathBuf),
}

pub fn synthetic_covariance(kind: &CovarianceKind, p: usize) -> Result<DMatrix<f64>> {
    if p == 0 {
        return Err(Error::domain("p must be >= 1"));
    }
    match kind {
        CovarianceKind::Identity => Ok(DMatrix::identity(p, p)),
        CovarianceKind::Zero => Ok(DMatrix::zeros(p, p)),
        CovarianceKind::Banded(a) => {
            if !(*a > 0.0 && *a < 1.0) {
                return Err(Error::domain(format!("banded parameter {a} outside (0, 1)")));
            }
            Ok(DMatrix::from_fn(p, p, |i, j| a.powi((i as i32 - j as i32).abs())))
        }
        CovarianceKind::BlockDiag { block_size, rho } => {
            if !(rho.abs() < 1.0) || *block_size == 0 {
                return Err(Error::domain(format!(
                    "block_diag needs |rho| < 1 and size >= 1, got {rho}, {block_size}"
                )));
            }
            let b = *block_size;
            Ok(DMatrix::from_fn(p, p, |i, j| {
                if i == j {
                    1.0
                } else if i / b == j / b {
                    *rho
                } else {
                    0.0
                }
            }))
        }
        CovarianceKind::FromFile(path) => {
            let sigma = crate::io::read_covariance_csv(path)?;
            if sigma.nrows() != p {
                return Err(Error::DimensionMismatch(format!(
                    "{} holds a {}×{} matrix, expected p={p}",
                    path.display(),
                    sigma.nrows(),
                    sigma.ncols()
                )));
            }
            check_psd(&sigma)?;
            Ok(sigma)
        }
    }
}

/// Rejects asymmetric or indefinite covariance input, reporting the
/// extreme eigenvalues.
pub fn check_psd(sigma: &DMatrix<f64>) -> Result<()> {
    let p = sigma.nrows();
    if sigma.ncols() != p {
        return Err(Error::DimensionMismatch("covariance must be square".into()));
    }
    let scale = sigma.amax().max(1.0);
    for i in 0..p {
        for j in (i + 1)..p {
            if (sigma[(i, j)] - sigma[(j, i)]).abs() > 1e-10 * scale {
                return Err(Error::domain(format!("covariance not symmetric at ({}, {})", i + 1, j + 1)));
            }
        }
    }
    let eig = sigma.clone().symmetric_eigen();
    let (min, max) = (eig.eigenvalues.min(), eig.eigenvalues.max());
    if min < -1e-10 * scale {
        return Err(Error::NotPositiveDefinite(format!("eigenvalues range over [{min:.6e}, {max:.6e}]")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn theta_values() {
        let t = RadialFamily::StudentT { nu: 4.5 };
        for p in [1, 5, 100] {
            assert_eq!(theoretical_theta(&RadialFamily::Gaussian, p, 1).unwrap(), 1.0);
            assert_eq!(theoretical_theta(&t, p, 1).unwrap(), 1.0);
        }
        assert!((theoretical_theta(&RadialFamily::Gaussian, 100, 2).unwrap() - 1.02).abs() < 1e-14);
        assert!((theoretical_theta(&t, 100, 2).unwrap() - 5.1).abs() < 1e-12);
        assert!(theoretical_theta(&t, 100, 3).is_err());
        assert!(theoretical_theta(&t, 100, 0).is_err());
    }

    #[test]
    fn family_parsing() {
        assert!(matches!("gaussian".parse::<RadialFamily>().unwrap(), RadialFamily::Gaussian));
        assert!(matches!("t:4.5".parse::<RadialFamily>().unwrap(), RadialFamily::StudentT { nu } if nu == 4.5));
        assert!("t:2".parse::<RadialFamily>().is_err());
        assert!("cauchy".parse::<RadialFamily>().is_err());
        assert_eq!(RadialFamily::StudentT { nu: 4.5 }.max_finite_moment(), Some(2));
        assert_eq!(RadialFamily::StudentT { nu: 5.0 }.max_finite_moment(), Some(2));
        assert_eq!(RadialFamily::StudentT { nu: 8.5 }.max_finite_moment(), Some(4));
    }

    #[test]
    fn sphere_points() {
        let mut rng = seeded(3);
        let u = sample_sphere(1, &mut rng).unwrap();
        assert!((u[0].abs() - 1.0).abs() < 1e-15);
        for _ in 0..100 {
            let u = sample_sphere(7, &mut rng).unwrap();
            assert!((u.norm() - 1.0).abs() < 1e-12);
        }
        let a = sample_sphere(5, &mut seeded(11)).unwrap();
        let b = sample_sphere(5, &mut seeded(11)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sphere_second_moment() {
        let mut rng = seeded(5);
        let draws = 200_000;
        let mut s = [0.0; 3];
        let mut s2 = [0.0; 3];
        for _ in 0..draws {
            let u = sample_sphere(3, &mut rng).unwrap();
            for j in 0..3 {
                s[j] += u[j] * u[j];
                s2[j] += u[j].powi(4);
            }
        }
        for j in 0..3 {
            let m = s[j] / draws as f64;
            let var = s2[j] / draws as f64 - m * m;
            assert!((m - 1.0 / 3.0).abs() < 3.0 * (var / draws as f64).sqrt() + 1e-4);
        }
    }

    #[test]
    fn radial_normalization() {
        let mut rng = seeded(17);
        for family in [RadialFamily::Gaussian, RadialFamily::StudentT { nu: 4.5 }] {
            let draws = 200_000;
            let xs: Vec<f64> = (0..draws).map(|_| sample_radial(&family, 20, &mut rng).unwrap().powi(2)).collect();
            let mean = xs.iter().sum::<f64>() / draws as f64;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / draws as f64;
            let se = (var / draws as f64).sqrt();
            assert!((mean - 20.0).abs() < 4.0 * se, "{family}: mean {mean} se {se}");
        }
    }

    #[test]
    fn zero_covariance_rows_equal_mean() {
        let mu = DVector::from_vec(vec![1.0, -2.0, 3.0]);
        let spec = EllipticalSpec::new(mu.clone(), DMatrix::zeros(3, 3), RadialFamily::Gaussian).unwrap();
        let s = sample(&spec, 10, &mut seeded(1)).unwrap();
        for i in 0..10 {
            for j in 0..3 {
                assert_eq!(s.data()[(i, j)], mu[j]);
            }
        }
    }

    #[test]
    fn sqrt_and_correlation() {
        let sigma = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 2.0, 0.3, 0.5, 0.3, 1.0]);
        let spec = EllipticalSpec::new(DVector::zeros(3), sigma.clone(), RadialFamily::Gaussian).unwrap();
        let r = spec.sigma_sqrt();
        assert!((r * r - &sigma).amax() < 1e-8 * sigma.amax());
        for i in 0..3 {
            assert_eq!(spec.correlation()[(i, i)], 1.0);
        }
        assert!((spec.correlation()[(0, 1)] - 1.0 / (2.0 * 2f64.sqrt())).abs() < 1e-14);
        let omega = spec.precision().unwrap();
        assert!((omega * &sigma - DMatrix::<f64>::identity(3, 3)).amax() < 1e-12);
    }

    #[test]
    fn rejects_bad_covariance() {
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]);
        assert!(EllipticalSpec::new(DVector::zeros(2), asym, RadialFamily::Gaussian).is_err());
        let indefinite = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(EllipticalSpec::new(DVector::zeros(2), indefinite.clone(), RadialFamily::Gaussian).is_err());
        assert!(check_psd(&indefinite).is_err());
    }

    #[test]
    fn ideal_reconstruction_of_radii() {
        let sigma = synthetic_covariance(&CovarianceKind::Banded(0.5), 6).unwrap();
        let mu = DVector::from_fn(6, |i, _| i as f64);
        for family in [RadialFamily::Gaussian, RadialFamily::StudentT { nu: 4.5 }] {
            let spec = EllipticalSpec::new(mu.clone(), sigma.clone(), family).unwrap();
            let (s, xi_sq) = sample_with_radii(&spec, 50, &mut seeded(8)).unwrap();
            let omega = spec.precision().unwrap();
            assert_eq!(xi_sq.len(), 50);
            for (i, &r) in xi_sq.iter().enumerate() {
                let d = s.data().row(i).transpose() - &mu;
                let q = (d.transpose() * omega * &d)[(0, 0)];
                assert!((q - r).abs() <= 1e-8 * r, "row {i}: {q} vs {r}");
            }
        }
    }

    #[test]
    fn gaussian_sample_covariance() {
        let spec = EllipticalSpec::new(DVector::zeros(50), DMatrix::identity(50, 50), RadialFamily::Gaussian).unwrap();
        let s = sample(&spec, 100_000, &mut seeded(2)).unwrap();
        let (_, cov) = s.moments();
        assert!((cov - DMatrix::<f64>::identity(50, 50)).norm() < 0.3);
    }

    #[test]
    fn t_marginal_kurtosis() {
        // marginal t_ν kurtosis 3(ν−2)/(ν−4) = 15 at ν = 4.5; the fourth
        // moment estimate converges slowly, so the tolerance is loose.
        let spec = EllipticalSpec::new(DVector::zeros(2), DMatrix::identity(2, 2), RadialFamily::StudentT { nu: 4.5 })
            .unwrap();
        let s = sample(&spec, 1_000_000, &mut seeded(4)).unwrap();
        let c = s.column(0);
        let m2 = c.iter().map(|x| x * x).sum::<f64>() / c.len() as f64;
        let m4 = c.iter().map(|x| x.powi(4)).sum::<f64>() / c.len() as f64;
        let kurt = m4 / (m2 * m2);
        assert!(kurt > 9.0 && kurt < 22.0, "kurtosis {kurt}");
        assert!((m2 - 1.0).abs() < 0.02);
    }

    #[test]
    fn synthetic_kinds() {
        assert_eq!(synthetic_covariance(&CovarianceKind::Identity, 3).unwrap(), DMatrix::identity(3, 3));
        let b = synthetic_covariance(&CovarianceKind::Banded(0.5), 3).unwrap();
        assert_eq!(b, DMatrix::from_row_slice(3, 3, &[1.0, 0.5, 0.25, 0.5, 1.0, 0.5, 0.25, 0.5, 1.0]));
        let bd = synthetic_covariance(&CovarianceKind::BlockDiag { block_size: 2, rho: 0.8 }, 4).unwrap();
        assert_eq!(bd[(0, 1)], 0.8);
        assert_eq!(bd[(2, 3)], 0.8);
        assert_eq!(bd[(1, 2)], 0.0);
        assert!(synthetic_covariance(&CovarianceKind::Banded(1.0), 3).is_err());
    }

    #[test]
    fn seeded_sampling_is_deterministic() {
        let spec = EllipticalSpec::new(
            DVector::zeros(4),
            synthetic_covariance(&CovarianceKind::Banded(0.3), 4).unwrap(),
            RadialFamily::StudentT { nu: 6.0 },
        )
        .unwrap();
        let a = sample(&spec, 20, &mut seeded(99)).unwrap();
        let b = sample(&spec, 20, &mut seeded(99)).unwrap();
        assert_eq!(a, b);
    }
}
