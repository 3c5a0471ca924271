//! C interface to the moment estimators.
//!
//! Every fallible function returns an [`EmStatus`] and writes its result
//! through an out-pointer. On failure the message is kept per thread and can
//! be read with [`em_last_error`]. Matrices are passed row-major; indices are
//! zero-based.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use elliptical_moments::blocks::BlockCollection;
use elliptical_moments::estimators::{self, LocationScale, MomentEstimate};
use elliptical_moments::model::{theoretical_theta, EllipticalSpec, RadialFamily, SampleMatrix};
use elliptical_moments::special;
use elliptical_moments::Error;
use nalgebra::{DMatrix, DVector};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmStatus {
    Ok = 0,
    NullPointer = 1,
    Domain = 2,
    MomentNonexistence = 3,
    DimensionMismatch = 4,
    NotPositiveDefinite = 5,
    NonConvergence = 6,
    InvalidBlocks = 7,
    RankDeficient = 8,
    Config = 9,
    Io = 10,
    Panic = 11,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmFamily {
    Gaussian = 0,
    StudentT = 1,
}

/// An `n × p` sample, owned by the library.
pub struct EmSamples(SampleMatrix);

/// A block collection over `p` coordinates.
pub struct EmBlocks(BlockCollection);

/// A confidence interval around the marginal estimate.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EmInterval {
    pub value: f64,
    pub lower: f64,
    pub upper: f64,
    /// Nonzero when the variance estimate was negative and clamped to zero.
    pub clamped: i32,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes replaced");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> EmStatus {
    match err {
        Error::Domain(_) => EmStatus::Domain,
        Error::MomentNonexistence { .. } => EmStatus::MomentNonexistence,
        Error::DimensionMismatch(_) => EmStatus::DimensionMismatch,
        Error::NotPositiveDefinite(_) => EmStatus::NotPositiveDefinite,
        Error::NonConvergence { .. } => EmStatus::NonConvergence,
        Error::InvalidBlocks(_) => EmStatus::InvalidBlocks,
        Error::RankDeficient(_) => EmStatus::RankDeficient,
        Error::Config(_) => EmStatus::Config,
        Error::Parse { .. } | Error::Io { .. } => EmStatus::Io,
    }
}

enum Fail {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

/// Runs `f`, storing the result in `out` and translating errors and panics.
fn guard<T>(out: *mut T, f: impl FnOnce() -> Result<T, Fail>) -> EmStatus {
    if out.is_null() {
        set_error("output pointer is null".into());
        return EmStatus::NullPointer;
    }
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(v)) => {
            // SAFETY: checked non-null; the caller guarantees it is writable.
            unsafe { out.write(v) };
            EmStatus::Ok
        }
        Ok(Err(Fail::Null(what))) => {
            set_error(format!("{what} is null"));
            EmStatus::NullPointer
        }
        Ok(Err(Fail::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic".into());
            EmStatus::Panic
        }
    }
}

/// # Safety
/// `ptr` must be null or valid for `len` reads.
unsafe fn slice<'a, T>(ptr: *const T, len: usize, what: &'static str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

/// # Safety
/// `ptr` must be null or point to a live handle.
unsafe fn handle<'a, T>(ptr: *const T, what: &'static str) -> Result<&'a T, Fail> {
    ptr.as_ref().ok_or(Fail::Null(what))
}

fn family(kind: EmFamily, nu: f64) -> Result<RadialFamily, Error> {
    match kind {
        EmFamily::Gaussian => Ok(RadialFamily::Gaussian),
        EmFamily::StudentT => RadialFamily::student_t(nu),
    }
}

fn square(values: &[f64], p: usize) -> DMatrix<f64> {
    DMatrix::from_row_slice(p, p, values)
}

/// Message for the last failed call on this thread, or null. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn em_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Copies an `n × p` row-major array into a new sample handle.
///
/// # Safety
/// `data` must be valid for `n * p` reads and `out` for one write.
#[no_mangle]
pub unsafe extern "C" fn em_samples_new(data: *const f64, n: usize, p: usize, out: *mut *mut EmSamples) -> EmStatus {
    guard(out, || {
        let len = n.checked_mul(p).ok_or_else(|| Error::DimensionMismatch("n * p overflows".into()))?;
        let values = slice(data, len, "data")?;
        let samples = SampleMatrix::new(DMatrix::from_row_slice(n, p, values))?;
        Ok(Box::into_raw(Box::new(EmSamples(samples))))
    })
}

/// # Safety
/// `samples` must be null or come from [`em_samples_new`], freed once.
#[no_mangle]
pub unsafe extern "C" fn em_samples_free(samples: *mut EmSamples) {
    if !samples.is_null() {
        drop(Box::from_raw(samples));
    }
}

/// Builds `count` blocks over `p` coordinates. Block `b` holds
/// `lengths[b]` indices, stored consecutively in `indices`.
///
/// # Safety
/// `lengths` must be valid for `count` reads, `indices` for their sum, and
/// `out` for one write.
#[no_mangle]
pub unsafe extern "C" fn em_blocks_new(
    indices: *const usize,
    lengths: *const usize,
    count: usize,
    p: usize,
    out: *mut *mut EmBlocks,
) -> EmStatus {
    guard(out, || {
        let lengths = slice(lengths, count, "lengths")?;
        let total = lengths.iter().try_fold(0usize, |acc, l| acc.checked_add(*l));
        let total = total.ok_or_else(|| Error::InvalidBlocks("block lengths overflow".into()))?;
        let flat = slice(indices, total, "indices")?;
        let mut sets = Vec::with_capacity(count);
        let mut at = 0;
        for &len in lengths {
            sets.push(flat[at..at + len].to_vec());
            at += len;
        }
        Ok(Box::into_raw(Box::new(EmBlocks(BlockCollection::manual(sets, p)?))))
    })
}

/// # Safety
/// `blocks` must be null or come from [`em_blocks_new`], freed once.
#[no_mangle]
pub unsafe extern "C" fn em_blocks_free(blocks: *mut EmBlocks) {
    if !blocks.is_null() {
        drop(Box::from_raw(blocks));
    }
}

/// # Safety
/// `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn em_marginal_constant(p: usize, m: u32, out: *mut f64) -> EmStatus {
    guard(out, || Ok(special::marginal_constant(p, m)?))
}

/// # Safety
/// `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn em_block_constant(p: usize, block_size: usize, m: u32, out: *mut f64) -> EmStatus {
    guard(out, || Ok(special::block_constant(p, block_size, m)?))
}

/// `θ_m` of the radial family in dimension `p`; `nu` is ignored for Gaussian.
///
/// # Safety
/// `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn em_theta(kind: EmFamily, nu: f64, p: usize, m: u32, out: *mut f64) -> EmStatus {
    guard(out, || Ok(theoretical_theta(&family(kind, nu)?, p, m)?))
}

/// # Safety
/// `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn em_normal_quantile(prob: f64, out: *mut f64) -> EmStatus {
    guard(out, || Ok(special::normal_quantile(prob)?))
}

/// Ideal estimator with known location `mu` (length p) and precision
/// `omega` (p × p).
///
/// # Safety
/// `samples` must be a live handle, `mu` valid for `p` reads, `omega` for
/// `p * p`, and `out` for one write.
#[no_mangle]
pub unsafe extern "C" fn em_ideal(
    samples: *const EmSamples,
    mu: *const f64,
    omega: *const f64,
    m: u32,
    out: *mut f64,
) -> EmStatus {
    guard(out, || {
        let s = &handle(samples, "samples")?.0;
        let p = s.p();
        let mu = DVector::from_column_slice(slice(mu, p, "mu")?);
        let omega = square(slice(omega, p * p, "omega")?, p);
        Ok(estimators::ideal_estimator(s, &mu, &omega, m)?.value)
    })
}

/// # Safety
/// `samples` must be a live handle and `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn em_marginal(
    samples: *const EmSamples,
    j: usize,
    mu_j: f64,
    sigma_jj: f64,
    m: u32,
    out: *mut f64,
) -> EmStatus {
    guard(out, || Ok(estimators::marginal_estimator(&handle(samples, "samples")?.0, j, mu_j, sigma_jj, m)?.value))
}

/// Marginal aggregation with location `mu` and scale diagonal `sigma_diag`.
///
/// # Safety
/// `samples` must be a live handle, `mu` and `sigma_diag` valid for `p`
/// reads, and `out` for one write.
#[no_mangle]
pub unsafe extern "C" fn em_mae(
    samples: *const EmSamples,
    mu: *const f64,
    sigma_diag: *const f64,
    m: u32,
    out: *mut f64,
) -> EmStatus {
    guard(out, || {
        let s = &handle(samples, "samples")?.0;
        let p = s.p();
        let loc = LocationScale::new(
            DVector::from_column_slice(slice(mu, p, "mu")?),
            DVector::from_column_slice(slice(sigma_diag, p, "sigma_diag")?),
        )?;
        Ok(estimators::mae(s, &loc, m)?.value)
    })
}

/// Blockwise aggregation; the blocks' scatter submatrices are taken from
/// the full `p × p` matrix `sigma`.
///
/// # Safety
/// `samples` and `blocks` must be live handles, `mu` valid for `p` reads,
/// `sigma` for `p * p`, and `out` for one write.
#[no_mangle]
pub unsafe extern "C" fn em_bae(
    samples: *const EmSamples,
    blocks: *const EmBlocks,
    mu: *const f64,
    sigma: *const f64,
    m: u32,
    out: *mut f64,
) -> EmStatus {
    guard(out, || {
        let s = &handle(samples, "samples")?.0;
        let b = &handle(blocks, "blocks")?.0;
        let p = s.p();
        let spec = EllipticalSpec::new(
            DVector::from_column_slice(slice(mu, p, "mu")?),
            square(slice(sigma, p * p, "sigma")?, p),
            RadialFamily::Gaussian,
        )?;
        let loc = LocationScale::from_spec(&spec, Some(b))?;
        Ok(estimators::bae(s, b, &loc, m)?.value)
    })
}

/// Interval at level `1 − alpha` around the marginal estimate, given
/// plug-ins for `θ_m` and `θ_{2m}`.
///
/// # Safety
/// `samples` must be a live handle and `out` valid for one write.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn em_confidence_interval(
    samples: *const EmSamples,
    j: usize,
    mu_j: f64,
    sigma_jj: f64,
    m: u32,
    theta_m: f64,
    theta_2m: f64,
    alpha: f64,
    out: *mut EmInterval,
) -> EmStatus {
    guard(out, || {
        let s = &handle(samples, "samples")?.0;
        let est = estimators::confidence_interval(s, j, mu_j, sigma_jj, m, theta_m, theta_2m, alpha)?;
        Ok(interval(&est))
    })
}

fn interval(est: &MomentEstimate) -> EmInterval {
    let ci = est.ci.expect("confidence_interval attaches an interval");
    EmInterval { value: est.value, lower: ci.lower, upper: ci.upper, clamped: ci.clamped as i32 }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::ffi::CStr;

    #[test]
    fn null_out_pointer() {
        assert_eq!(unsafe { em_marginal_constant(3, 2, ptr::null_mut()) }, EmStatus::NullPointer);
        let msg = unsafe { CStr::from_ptr(em_last_error()) }.to_str().unwrap();
        assert!(msg.contains("null"));
    }

    #[test]
    fn domain_error_sets_message() {
        let mut v = 0.0;
        assert_eq!(unsafe { em_marginal_constant(3, 0, &mut v) }, EmStatus::Domain);
        assert!(!em_last_error().is_null());
        assert_eq!(unsafe { em_theta(EmFamily::StudentT, 1.5, 3, 1, &mut v) }, EmStatus::Domain);
    }
}
