//! Exact combinatorial constants and closed-form variance expressions.
//!
//! Every ratio of Gamma functions that shows up in the estimators is a
//! telescoping product, so nothing here calls `lgamma`; the products stay
//! exact (up to rounding) for dimensions far beyond what a Gamma quotient
//! would survive.

use nalgebra::DMatrix;

use crate::blocks::{validate_blocks, BlockCollection};
use crate::error::{Error, Result};
use crate::model::RadialFamily;

/// Order `m` of the scaled even moment `p^{-m} E ξ^{2m}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MomentOrder(u32);

impl MomentOrder {
    pub fn new(m: u32) -> Result<Self> {
        if m == 0 {
            return Err(Error::domain("moment order must be >= 1"));
        }
        Ok(MomentOrder(m))
    }

    pub fn get(self) -> u32 {
        self.0
    }
}

impl std::fmt::Display for MomentOrder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.0.fmt(f)
    }
}

/// Three-term split of a relative variance `var(θ̂)/θ²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceDecomposition {
    pub dominating: f64,
    pub second_order: f64,
    pub correlation_term: f64,
    pub total: f64,
}

impl VarianceDecomposition {
    fn new(dominating: f64, second_order: f64, correlation_term: f64) -> Self {
        // Rounding can leave the dominating term a hair below zero when
        // r_{2m} == r_m^2 is computed through different products.
        let dominating = dominating.max(0.0);
        let second_order = second_order.max(0.0);
        let correlation_term = correlation_term.max(0.0);
        VarianceDecomposition {
            dominating,
            second_order,
            correlation_term,
            total: dominating + second_order + correlation_term,
        }
    }
}

fn check_positive(name: &str, v: u64) -> Result<()> {
    if v == 0 {
        Err(Error::domain(format!("{name} must be >= 1")))
    } else {
        Ok(())
    }
}

/// `E[N(0,1)^{2k}] = (2k-1)!!`.
pub fn gaussian_even_moment(k: u32) -> Result<f64> {
    check_positive("k", k as u64)?;
    Ok(double_factorial_odd(k))
}

/// `(2k-1)!!` with `(−1)!! = 1`, so `k = 0` maps to 1.
pub(crate) fn double_factorial_odd(k: u32) -> f64 {
    (1..=k).map(|i| (2 * i - 1) as f64).product()
}

/// `E[(χ²_p)^m] = ∏_{j<m} (p + 2j)`.
pub fn chi_square_even_moment(p: usize, m: u32) -> Result<f64> {
    check_positive("p", p as u64)?;
    check_positive("m", m as u64)?;
    let direct: f64 = (0..m).map(|j| p as f64 + 2.0 * j as f64).product();
    if direct.is_finite() {
        return Ok(direct);
    }
    let log: f64 = (0..m).map(|j| (p as f64 + 2.0 * j as f64).ln()).sum();
    Ok(log.exp())
}

/// `c_m = (2m-1)!! (p/2)^m Γ(p/2)/Γ(p/2+m)`, through the product
/// `(2m-1)!! ∏_{j<m} p/(p+2j)`.
pub fn marginal_constant(p: usize, m: u32) -> Result<f64> {
    check_positive("p", p as u64)?;
    check_positive("m", m as u64)?;
    let pf = p as f64;
    let ratio: f64 = (0..m).map(|j| pf / (pf + 2.0 * j as f64)).product();
    Ok(double_factorial_odd(m) * ratio)
}

/// `c*_{m,K} = p^m E[B^m]` for `B ~ Beta(K/2, (p-K)/2)`.
pub fn block_constant(p: usize, block_size: usize, m: u32) -> Result<f64> {
    check_positive("p", p as u64)?;
    check_positive("block size", block_size as u64)?;
    check_positive("m", m as u64)?;
    if block_size > p {
        return Err(Error::domain(format!("block size {block_size} exceeds dimension {p}")));
    }
    let pf = p as f64;
    let kf = block_size as f64;
    let mut c = kf;
    for i in 2..=m {
        let step = 2.0 * i as f64 - 2.0;
        c *= pf * (kf + step) / (pf + step);
    }
    Ok(c)
}

/// `r_k = E ξ^{2k} / E (χ²_p)^k`.
pub fn radial_moment_ratio(family: &RadialFamily, p: usize, k: u32) -> Result<f64> {
    check_positive("p", p as u64)?;
    check_positive("k", k as u64)?;
    match family {
        RadialFamily::Gaussian => Ok(1.0),
        RadialFamily::StudentT { nu } => {
            let nu = *nu;
            if 2.0 * k as f64 >= nu {
                return Err(Error::MomentNonexistence { family: family.to_string(), order: 2 * k });
            }
            // ξ² = (ν-2) χ²_p / χ²_ν, and E[(χ²_ν)^{-k}] = 1/∏_{j=1}^k (ν-2j).
            let mut r = 1.0;
            for j in 1..=k {
                r *= (nu - 2.0) / (nu - 2.0 * j as f64);
            }
            Ok(r)
        }
        RadialFamily::Custom(custom) => {
            if k > custom.max_finite_moment {
                return Err(Error::MomentNonexistence { family: family.to_string(), order: 2 * k });
            }
            let moment = custom
                .even_moment
                .as_ref()
                .ok_or_else(|| Error::domain("custom radial family has no closed-form moments"))?;
            Ok(moment(p, k) / chi_square_even_moment(p, k)?)
        }
    }
}

/// `h_m(k) = k var((χ²_k)^m) / (E (χ²_k)^m)^2`.
///
/// With `N = ∏_{j<m}(k+2m+2j)` and `D = ∏_{j<m}(k+2j)` this is `k (N-D)/D`;
/// the difference is taken in integers while it fits, in `expm1` form after.
pub fn h_factor(k: usize, m: u32) -> Result<f64> {
    check_positive("k", k as u64)?;
    check_positive("m", m as u64)?;
    let k128 = k as u128;
    let m128 = m as u128;
    let exact = (0..m128).try_fold((1u128, 1u128), |(num, den), j| {
        Some((num.checked_mul(k128 + 2 * m128 + 2 * j)?, den.checked_mul(k128 + 2 * j)?))
    });
    if let Some((num, den)) = exact {
        if let Some(scaled) = (num - den).checked_mul(k128) {
            return Ok(scaled as f64 / den as f64);
        }
    }
    let kf = k as f64;
    let log_ratio: f64 = (0..m).map(|j| (2.0 * m as f64 / (kf + 2.0 * j as f64)).ln_1p()).sum();
    Ok(kf * log_ratio.exp_m1())
}

/// `h̄_m(𝒜) = (p/|𝒜|²) Σ_J h_m(|J|)/|J|`.
pub fn block_division_factor(blocks: &BlockCollection, p: usize, m: u32) -> Result<f64> {
    if blocks.is_empty() {
        return Err(Error::InvalidBlocks("empty block collection".into()));
    }
    let diag = validate_blocks(blocks, p, false);
    if let Some(err) = diag.into_error() {
        return Err(err);
    }
    let count = blocks.len() as f64;
    let mut sum = 0.0;
    for block in blocks.iter() {
        let size = block.len();
        sum += h_factor(size, m)? / size as f64;
    }
    Ok(p as f64 * sum / (count * count))
}

fn binomial(n: u32, k: u32) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut acc = 1.0;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc.round()
}

/// Coefficient `B_m(s)` of the power-covariance expansion, `2 <= s <= 2m`.
///
/// `Σ_{k1+k2=s, 1<=k1,k2<=m} C(2m,2k1) C(2m,2k2) η_{m-k1} η_{m-k2} (η_s − η_{k1} η_{k2})`.
pub fn power_cov_coefficient(m: u32, s: u32) -> Result<f64> {
    if m < 2 {
        return Err(Error::domain("power covariance needs m >= 2"));
    }
    if s < 2 || s > 2 * m {
        return Err(Error::domain(format!("coefficient index s={s} outside [2, {}]", 2 * m)));
    }
    let mut total = 0.0;
    for k1 in 1..=m {
        if s <= k1 || s - k1 > m {
            continue;
        }
        let k2 = s - k1;
        total += binomial(2 * m, 2 * k1)
            * binomial(2 * m, 2 * k2)
            * double_factorial_odd(m - k1)
            * double_factorial_odd(m - k2)
            * (double_factorial_odd(s) - double_factorial_odd(k1) * double_factorial_odd(k2));
    }
    Ok(total)
}

/// `β_m(ρ) = cov(X₁^{2m}, X₂^{2m})` for a unit-variance bivariate normal
/// with correlation `ρ`.
///
/// Writing `X_i = √|ρ| V + √(1-|ρ|) W_i` and conditioning on `V` gives
/// `β_m(ρ) = Σ_{s=2}^{2m} B_m(s) (1-|ρ|)^{2m-s} |ρ|^s`; the sum must run to
/// `2m` for the identity to hold (at `m = 2` it is `72ρ² + 24ρ⁴`).
pub fn bivariate_normal_power_cov(rho: f64, m: u32) -> Result<f64> {
    if !(rho.abs() < 1.0) {
        return Err(Error::domain(format!("correlation {rho} outside (-1, 1)")));
    }
    if m < 2 {
        return Err(Error::domain("power covariance needs m >= 2"));
    }
    let a = rho.abs();
    let mut total = 0.0;
    for s in 2..=2 * m {
        total += power_cov_coefficient(m, s)? * (1.0 - a).powi((2 * m - s) as i32) * a.powi(s as i32);
    }
    Ok(total.max(0.0))
}

fn ratio_terms(family: &RadialFamily, p: usize, m: u32) -> Result<(f64, f64)> {
    let r_m = radial_moment_ratio(family, p, m)?;
    let r_2m = radial_moment_ratio(family, p, 2 * m)?;
    Ok((r_m, r_2m))
}

fn check_n(n: usize) -> Result<()> {
    check_positive("n", n as u64)
}

/// Relative variance of the Ideal Estimator; exact, no correlation term.
pub fn variance_oracle_ie(family: &RadialFamily, p: usize, n: usize, m: u32) -> Result<VarianceDecomposition> {
    check_n(n)?;
    let (r_m, r_2m) = ratio_terms(family, p, m)?;
    let nf = n as f64;
    let dominating = (r_2m - r_m * r_m) / (nf * r_m * r_m);
    let second = r_2m / (r_m * r_m) * h_factor(p, m)? / (nf * p as f64);
    Ok(VarianceDecomposition::new(dominating, second, 0.0))
}

/// Three-term variance of MAE with known location and scale.
///
/// `correlation_offdiag_sq` is `‖Λ − I‖_F²`. At `m = 2` the constant
/// `C_m = 72` is used unless one is supplied; other orders require it.
pub fn variance_oracle_mae(
    family: &RadialFamily,
    correlation_offdiag_sq: f64,
    p: usize,
    n: usize,
    m: u32,
    c_m: Option<f64>,
) -> Result<VarianceDecomposition> {
    check_n(n)?;
    if !(correlation_offdiag_sq >= 0.0) {
        return Err(Error::domain("off-diagonal Frobenius mass must be nonnegative"));
    }
    let c_m = match (c_m, m) {
        (Some(c), _) => c,
        (None, 2) => 72.0,
        (None, _) => return Err(Error::domain(format!("no pinned correlation constant for m={m}; supply one"))),
    };
    let (r_m, r_2m) = ratio_terms(family, p, m)?;
    let eta_m = double_factorial_odd(m);
    let nf = n as f64;
    let pf = p as f64;
    let dominating = (r_2m - r_m * r_m) / (nf * r_m * r_m);
    let second = r_2m / (r_m * r_m) * h_factor(1, m)? / (nf * pf);
    let corr = c_m / nf * r_2m / (r_m * r_m * eta_m * eta_m) * correlation_offdiag_sq / (pf * pf);
    Ok(VarianceDecomposition::new(dominating, second, corr))
}

/// MAE variance with the correlation term summed exactly from `β_m(Λ_jk)`
/// over every off-diagonal pair of the supplied correlation matrix.
pub fn variance_mae_exact(
    family: &RadialFamily,
    correlation: &DMatrix<f64>,
    n: usize,
    m: u32,
) -> Result<VarianceDecomposition> {
    check_n(n)?;
    let p = correlation.nrows();
    if p == 0 || correlation.ncols() != p {
        return Err(Error::DimensionMismatch("correlation matrix must be square and nonempty".into()));
    }
    let (r_m, r_2m) = ratio_terms(family, p, m)?;
    let eta_m = double_factorial_odd(m);
    let nf = n as f64;
    let pf = p as f64;
    let mut pair_sum = 0.0;
    for j in 0..p {
        for k in (j + 1)..p {
            let rho = correlation[(j, k)];
            if rho != 0.0 {
                pair_sum += bivariate_normal_power_cov(rho, m)?;
            }
        }
    }
    let dominating = (r_2m - r_m * r_m) / (nf * r_m * r_m);
    let second = r_2m / (r_m * r_m) * h_factor(1, m)? / (nf * pf);
    let corr = r_2m / (r_m * r_m) * 2.0 * pair_sum / (nf * pf * pf * eta_m * eta_m);
    Ok(VarianceDecomposition::new(dominating, second, corr))
}

/// Variance bound for BAE over non-overlapping blocks.
///
/// `cross_block_norms_sq` holds `‖Σ_II^{-1/2} Σ_IJ Σ_JJ^{-1/2}‖²` for the
/// ordered pairs `I ≠ J`; `c_tilde` is the caller's correlation constant.
pub fn variance_oracle_bae(
    family: &RadialFamily,
    blocks: &BlockCollection,
    cross_block_norms_sq: &[f64],
    p: usize,
    n: usize,
    m: u32,
    c_tilde: f64,
) -> Result<VarianceDecomposition> {
    check_n(n)?;
    let diag = validate_blocks(blocks, p, true);
    if let Some(err) = diag.into_error() {
        return Err(err);
    }
    if cross_block_norms_sq.iter().any(|v| !(*v >= 0.0)) || !(c_tilde >= 0.0) {
        return Err(Error::domain("cross-block norms and constant must be nonnegative"));
    }
    let (r_m, r_2m) = ratio_terms(family, p, m)?;
    let nf = n as f64;
    let count = blocks.len() as f64;
    let dominating = (r_2m - r_m * r_m) / (nf * r_m * r_m);
    let second = r_2m / (r_m * r_m) * block_division_factor(blocks, p, m)? / (nf * p as f64);
    let corr = c_tilde / nf * cross_block_norms_sq.iter().sum::<f64>() / (count * count);
    Ok(VarianceDecomposition::new(dominating, second, corr))
}

/// Standard normal quantile, Wichura's AS 241 (PPND16).
#[allow(clippy::excessive_precision, clippy::inconsistent_digit_grouping)]
pub fn normal_quantile(prob: f64) -> Result<f64> {
    if !(prob > 0.0 && prob < 1.0) {
        return Err(Error::domain(format!("probability {prob} outside (0, 1)")));
    }
    let q = prob - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        let num = ((((((2509.080_928_730_122_7 * r + 33430.575_583_588_128) * r + 67265.770_927_008_700) * r
            + 45921.953_931_549_871)
            * r
            + 13731.693_765_509_461)
            * r
            + 1971.590_950_306_551_3)
            * r
            + 133.141_667_891_784_38)
            * r
            + 3.387_132_872_796_366_5;
        let den = ((((((5226.495_278_852_545_5 * r + 28729.085_735_721_943) * r + 39307.895_800_092_710) * r
            + 21213.794_301_586_595)
            * r
            + 5394.196_021_424_751_1)
            * r
            + 687.187_007_492_057_91)
            * r
            + 42.313_330_701_600_911)
            * r
            + 1.0;
        return Ok(q * num / den);
    }
    let tail = if q < 0.0 { prob } else { 1.0 - prob };
    let mut r = (-tail.ln()).sqrt();
    let value = if r <= 5.0 {
        r -= 1.6;
        let num = ((((((7.745_450_142_783_414_1e-4 * r + 0.022_723_844_989_269_184) * r + 0.241_780_725_177_450_61)
            * r
            + 1.270_458_252_452_368_4)
            * r
            + 3.647_848_324_763_204_5)
            * r
            + 5.769_497_221_460_691_4)
            * r
            + 4.630_337_846_156_545_3)
            * r
            + 1.423_437_110_749_683_5;
        let den =
            ((((((1.050_750_071_644_416_9e-9 * r + 5.475_938_084_995_344_9e-4) * r + 0.015_198_666_563_616_457) * r
                + 0.148_103_976_427_480_07)
                * r
                + 0.689_767_334_985_100_05)
                * r
                + 1.676_384_830_183_803_8)
                * r
                + 2.053_191_626_637_758_8)
                * r
                + 1.0;
        num / den
    } else {
        r -= 5.0;
        let num = ((((((2.010_334_399_292_288_1e-7 * r + 2.711_555_568_743_487_6e-5) * r
            + 0.001_242_660_947_388_078_4)
            * r
            + 0.026_532_189_526_576_123)
            * r
            + 0.296_560_571_828_504_89)
            * r
            + 1.784_826_539_917_291_3)
            * r
            + 5.463_784_911_164_114_4)
            * r
            + 6.657_904_643_501_103_3;
        let den =
            ((((((2.044_263_103_389_939_7e-15 * r + 1.421_511_758_316_446e-7) * r + 1.846_318_317_510_054_8e-5) * r
                + 7.868_691_311_456_132_6e-4)
                * r
                + 0.014_875_361_290_850_615)
                * r
                + 0.136_929_880_922_735_81)
                * r
                + 0.599_832_206_555_887_94)
                * r
                + 1.0;
        num / den
    };
    Ok(if q < 0.0 { -value } else { value })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blocks::BlockCollection;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn gaussian_moments() {
        assert_eq!(gaussian_even_moment(1).unwrap(), 1.0);
        assert_eq!(gaussian_even_moment(2).unwrap(), 3.0);
        assert_eq!(gaussian_even_moment(4).unwrap(), 105.0);
        assert_eq!(gaussian_even_moment(6).unwrap(), 10395.0);
        assert!(gaussian_even_moment(0).is_err());
    }

    #[test]
    fn chi_square_moments() {
        assert_eq!(chi_square_even_moment(5, 1).unwrap(), 5.0);
        assert_eq!(chi_square_even_moment(4, 2).unwrap(), 24.0);
        assert_eq!(chi_square_even_moment(100, 4).unwrap(), 100.0 * 102.0 * 104.0 * 106.0);
        assert!(chi_square_even_moment(0, 2).is_err());
        assert!(chi_square_even_moment(3, 0).is_err());
        let huge = chi_square_even_moment(1_000_000, 60).unwrap();
        assert!(huge.is_finite() || huge == f64::INFINITY);
    }

    #[test]
    fn marginal_constants() {
        for p in [1, 2, 7, 100, 10_000] {
            assert!((marginal_constant(p, 1).unwrap() - 1.0).abs() < 1e-12);
        }
        assert!((marginal_constant(2, 2).unwrap() - 1.5).abs() < 1e-15);
        assert!(rel(marginal_constant(100, 2).unwrap(), 300.0 / 102.0) < 1e-14);
        // large p: approaches (2m-1)!!
        assert!(rel(marginal_constant(1_000_000, 3).unwrap(), 15.0) < 1e-4);
    }

    #[test]
    fn block_constants() {
        assert_eq!(block_constant(50, 7, 1).unwrap(), 7.0);
        assert!(rel(block_constant(10, 10, 2).unwrap(), 100.0) < 1e-14);
        for p in [1usize, 3, 20, 999] {
            for m in 1..=6 {
                let a = block_constant(p, 1, m).unwrap();
                let b = marginal_constant(p, m).unwrap();
                assert!(rel(a, b) < 1e-12, "p={p} m={m}");
            }
        }
        assert!(block_constant(3, 4, 2).is_err());
    }

    #[test]
    fn student_ratio() {
        let t = RadialFamily::StudentT { nu: 4.5 };
        assert!(rel(radial_moment_ratio(&t, 10, 2).unwrap(), 5.0) < 1e-14);
        assert!(matches!(radial_moment_ratio(&t, 10, 3), Err(Error::MomentNonexistence { .. })));
        assert_eq!(radial_moment_ratio(&RadialFamily::Gaussian, 9, 5).unwrap(), 1.0);
        // r_1 = 1 by the normalization E ξ² = p
        assert!(rel(radial_moment_ratio(&t, 10, 1).unwrap(), 1.0) < 1e-15);
    }

    #[test]
    fn h_factor_values() {
        assert_eq!(h_factor(1, 2).unwrap(), 32.0 / 3.0);
        assert_eq!(h_factor(1, 1).unwrap(), 2.0);
        assert_eq!(h_factor(2, 2).unwrap(), 10.0);
        // large-k limit 2m²
        assert!((h_factor(1_000_000, 2).unwrap() - 8.0).abs() < 1e-4);
        // log path agrees with the integer path at the switch-over
        let k = 10_000_000usize;
        let direct = h_factor(k, 2).unwrap();
        assert!(rel(direct, 8.0 * (k as f64 + 3.0) / (k as f64 + 2.0)) < 1e-9);
        let log_path = h_factor(100_000_000_000, 6).unwrap();
        assert!((log_path - 72.0).abs() < 1e-6);
    }

    #[test]
    fn block_division() {
        let p = 12;
        let equal = BlockCollection::contiguous(p, 3).unwrap();
        assert!(rel(block_division_factor(&equal, p, 2).unwrap(), h_factor(3, 2).unwrap()) < 1e-14);
        let singles = BlockCollection::contiguous(p, 1).unwrap();
        assert!(rel(block_division_factor(&singles, p, 2).unwrap(), 32.0 / 3.0) < 1e-14);
        let full = BlockCollection::contiguous(p, p).unwrap();
        assert!(rel(block_division_factor(&full, p, 2).unwrap(), h_factor(p, 2).unwrap()) < 1e-14);
    }

    #[test]
    fn power_cov_m2_explicit() {
        // E X⁴Y⁴ = 9 + 72ρ² + 24ρ⁴ for a standard bivariate normal.
        for i in -9..=9 {
            let rho = i as f64 / 10.0;
            let want = 72.0 * rho * rho + 24.0 * rho.powi(4);
            assert!((bivariate_normal_power_cov(rho, 2).unwrap() - want).abs() < 1e-10);
        }
        assert_eq!(power_cov_coefficient(2, 2).unwrap(), 72.0);
        assert_eq!(bivariate_normal_power_cov(0.0, 4).unwrap(), 0.0);
        assert!(bivariate_normal_power_cov(0.3, 1).is_err());
        assert!(bivariate_normal_power_cov(1.0, 2).is_err());
    }

    #[test]
    fn ie_oracle() {
        let g = RadialFamily::Gaussian;
        let v = variance_oracle_ie(&g, 100, 50, 2).unwrap();
        assert_eq!(v.dominating, 0.0);
        assert!(rel(v.total * 5000.0, 8.0 * 103.0 / 102.0) < 1e-12);
        assert_eq!(v.correlation_term, 0.0);
    }

    #[test]
    fn mae_oracle() {
        let g = RadialFamily::Gaussian;
        let v = variance_oracle_mae(&g, 0.0, 100, 50, 2, None).unwrap();
        assert_eq!(v.correlation_term, 0.0);
        assert!(rel(v.total * 5000.0, 32.0 / 3.0) < 1e-12);
        assert!(variance_oracle_mae(&g, 0.0, 100, 50, 3, None).is_err());
        assert!(variance_oracle_mae(&g, 0.0, 100, 50, 3, Some(1.0)).is_ok());
        // 2x2 blocks with off-diagonal ρ: ‖Λ-I‖² = pρ²; the C=72 bound keeps
        // only the quadratic part of the exact covariance.
        let rho: f64 = 0.8;
        let v = variance_oracle_mae(&g, 100.0 * rho * rho, 100, 50, 2, None).unwrap();
        assert!(rel(v.total * 5000.0, (32.0 + 24.0 * rho * rho) / 3.0) < 1e-12);
    }

    #[test]
    fn mae_exact_block_case() {
        let p = 10;
        let rho = 0.8;
        let mut corr = DMatrix::identity(p, p);
        for b in 0..p / 2 {
            corr[(2 * b, 2 * b + 1)] = rho;
            corr[(2 * b + 1, 2 * b)] = rho;
        }
        let v = variance_mae_exact(&RadialFamily::Gaussian, &corr, 7, 2).unwrap();
        let want = 8.0 * (4.0 + 3.0 * rho * rho + rho.powi(4)) / (3.0 * 7.0 * p as f64);
        assert!(rel(v.total, want) < 1e-12);
    }

    #[test]
    fn bae_oracle() {
        let g = RadialFamily::Gaussian;
        let p = 100;
        let singles = BlockCollection::contiguous(p, 1).unwrap();
        let b = variance_oracle_bae(&g, &singles, &[], p, 50, 2, 0.0).unwrap();
        let m = variance_oracle_mae(&g, 0.0, p, 50, 2, None).unwrap();
        assert!(rel(b.second_order, m.second_order) < 1e-12);
        for k in [2usize, 4, 5] {
            let blocks = BlockCollection::contiguous(p, k).unwrap();
            let v = variance_oracle_bae(&g, &blocks, &[0.0; 3], p, 50, 2, 17.0).unwrap();
            assert_eq!(v.correlation_term, 0.0);
            let kf = k as f64;
            assert!(rel(v.total * 5000.0, 8.0 * (kf + 3.0) / (kf + 2.0)) < 1e-12);
        }
        let overlapping = BlockCollection::manual(vec![vec![0, 1], vec![1, 2]], 3).unwrap();
        assert!(variance_oracle_bae(&g, &overlapping, &[], 3, 5, 2, 0.0).is_err());
    }

    #[test]
    fn decomposition_sums() {
        let t = RadialFamily::StudentT { nu: 30.0 };
        let v = variance_oracle_mae(&t, 3.0, 40, 25, 2, None).unwrap();
        assert!(v.dominating > 0.0);
        assert!(rel(v.total, v.dominating + v.second_order + v.correlation_term) < 1e-12);
        assert!(variance_oracle_ie(&RadialFamily::StudentT { nu: 4.5 }, 40, 25, 2).is_err());
    }

    #[test]
    fn quantiles() {
        assert_eq!(normal_quantile(0.5).unwrap(), 0.0);
        assert!((normal_quantile(0.975).unwrap() - 1.959_963_984_540_054).abs() < 1e-12);
        assert!((normal_quantile(0.025).unwrap() + 1.959_963_984_540_054).abs() < 1e-12);
        assert!((normal_quantile(1e-10).unwrap() + 6.361_340_902_404_056).abs() < 1e-9);
        assert!(normal_quantile(0.0).is_err());
        assert!(normal_quantile(1.0).is_err());
    }
}
