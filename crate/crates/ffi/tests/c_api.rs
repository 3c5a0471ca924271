use std::ffi::CStr;
use std::path::Path;
use std::process::Command;
use std::ptr;

use elliptical_moments::blocks::BlockCollection;
use elliptical_moments::estimators::{bae, mae, LocationScale};
use elliptical_moments::model::{EllipticalSpec, RadialFamily, SampleMatrix};
use elliptical_moments_ffi::*;
use nalgebra::{DMatrix, DVector};

fn rows() -> (Vec<f64>, usize, usize) {
    let n = 40;
    let p = 4;
    // deterministic, non-degenerate filler
    let data = (0..n * p).map(|i| ((i * 37 % 101) as f64 / 17.0).sin() * (1.0 + (i % 3) as f64)).collect();
    (data, n, p)
}

fn new_samples(data: &[f64], n: usize, p: usize) -> *mut EmSamples {
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { em_samples_new(data.as_ptr(), n, p, &mut s) }, EmStatus::Ok);
    s
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(em_last_error()) }.to_string_lossy().into_owned()
}

#[test]
fn estimators_match_the_rust_api() {
    let (data, n, p) = rows();
    let s = new_samples(&data, n, p);
    let samples = SampleMatrix::new(DMatrix::from_row_slice(n, p, &data)).unwrap();
    let mu = vec![0.1, -0.2, 0.0, 0.3];
    let diag = vec![1.0, 2.0, 0.5, 1.5];

    let mut v = 0.0;
    assert_eq!(unsafe { em_mae(s, mu.as_ptr(), diag.as_ptr(), 2, &mut v) }, EmStatus::Ok);
    let loc = LocationScale::new(DVector::from_vec(mu.clone()), DVector::from_vec(diag.clone())).unwrap();
    assert_eq!(v, mae(&samples, &loc, 2).unwrap().value);

    let mut sigma = DMatrix::from_diagonal(&DVector::from_vec(diag.clone()));
    sigma[(0, 1)] = 0.4;
    sigma[(1, 0)] = 0.4;
    let sigma_rows: Vec<f64> = sigma.transpose().iter().copied().collect();
    let idx = [0usize, 1, 2, 3];
    let lens = [2usize, 2];
    let mut b = ptr::null_mut();
    assert_eq!(unsafe { em_blocks_new(idx.as_ptr(), lens.as_ptr(), 2, p, &mut b) }, EmStatus::Ok);
    assert_eq!(unsafe { em_bae(s, b, mu.as_ptr(), sigma_rows.as_ptr(), 2, &mut v) }, EmStatus::Ok);
    let spec = EllipticalSpec::new(DVector::from_vec(mu.clone()), sigma.clone(), RadialFamily::Gaussian).unwrap();
    let blocks = BlockCollection::manual(vec![vec![0, 1], vec![2, 3]], p).unwrap();
    let loc = LocationScale::from_spec(&spec, Some(&blocks)).unwrap();
    assert_eq!(v, bae(&samples, &blocks, &loc, 2).unwrap().value);

    let omega = sigma.clone().try_inverse().unwrap();
    let omega_rows: Vec<f64> = omega.transpose().iter().copied().collect();
    assert_eq!(unsafe { em_ideal(s, mu.as_ptr(), omega_rows.as_ptr(), 2, &mut v) }, EmStatus::Ok);
    assert!(v > 0.0);

    let mut ci = EmInterval::default();
    assert_eq!(unsafe { em_confidence_interval(s, 0, 0.1, 1.0, 2, 1.2, 2.0, 0.05, &mut ci) }, EmStatus::Ok);
    assert!(ci.lower <= ci.value && ci.value <= ci.upper);
    assert_eq!(unsafe { em_marginal(s, 0, 0.1, 1.0, 2, &mut v) }, EmStatus::Ok);
    assert_eq!(v, ci.value);
    assert_eq!(unsafe { em_confidence_interval(s, 0, 0.1, 1.0, 2, 1.2, 2.0, 1.0, &mut ci) }, EmStatus::Ok);
    assert_eq!(ci.lower, ci.upper);

    unsafe {
        em_blocks_free(b);
        em_samples_free(s);
    }
}

#[test]
fn constants() {
    let mut v = 0.0;
    assert_eq!(unsafe { em_marginal_constant(100, 2, &mut v) }, EmStatus::Ok);
    assert!((v - 3.0 * 100.0 / 102.0).abs() < 1e-14);
    assert_eq!(unsafe { em_block_constant(100, 1, 2, &mut v) }, EmStatus::Ok);
    assert!((v - 3.0 * 100.0 / 102.0).abs() < 1e-14);
    assert_eq!(unsafe { em_theta(EmFamily::StudentT, 4.5, 100, 2, &mut v) }, EmStatus::Ok);
    assert!((v - 5.1).abs() < 1e-12);
    assert_eq!(unsafe { em_normal_quantile(0.975, &mut v) }, EmStatus::Ok);
    assert!((v - 1.959963984540054).abs() < 1e-14);
}

#[test]
fn errors_are_reported() {
    let (data, n, p) = rows();
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { em_samples_new(ptr::null(), n, p, &mut s) }, EmStatus::NullPointer);
    assert!(last_error().contains("data"));

    let s = new_samples(&data, n, p);
    let mut v = 0.0;
    assert_eq!(unsafe { em_marginal(s, 9, 0.0, 1.0, 2, &mut v) }, EmStatus::DimensionMismatch);
    assert_eq!(unsafe { em_marginal(s, 0, 0.0, -1.0, 2, &mut v) }, EmStatus::Domain);
    assert!(!last_error().is_empty());

    let idx = [0usize, 7];
    let lens = [2usize];
    let mut b = ptr::null_mut();
    assert_eq!(unsafe { em_blocks_new(idx.as_ptr(), lens.as_ptr(), 1, p, &mut b) }, EmStatus::InvalidBlocks);
    assert!(b.is_null());

    assert_eq!(unsafe { em_theta(EmFamily::StudentT, 4.5, 10, 3, &mut v) }, EmStatus::MomentNonexistence);
    unsafe {
        em_samples_free(s);
        em_samples_free(ptr::null_mut());
    }
}

#[test]
fn header_compiles_as_c() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/elliptical_moments.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in ["em_samples_new", "em_bae", "em_confidence_interval", "em_last_error", "EM_STATUS_OK"] {
        assert!(text.contains(name), "{name} missing from header");
    }
    let dir = tempfile::tempdir().unwrap();
    let program = dir.path().join("use.c");
    std::fs::write(
        &program,
        r#"#include "elliptical_moments.h"
int probe(void) {
    double c = 0.0;
    EmStatus st = em_marginal_constant(10, 2, &c);
    EmInterval ci;
    (void)ci;
    return st == EM_STATUS_OK ? 0 : 1;
}
"#,
    )
    .unwrap();
    let status = Command::new(std::env::var("CC").unwrap_or_else(|_| "cc".into()))
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(header.parent().unwrap())
        .arg(&program)
        .status()
        .expect("run C compiler");
    assert!(status.success());
}
