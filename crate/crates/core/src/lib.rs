//! Estimation of the scaled even moments `θ_m = p^{-m} E ξ^{2m}` of
//! high-dimensional elliptical data.
//!
//! The estimators live in [`estimators`]; [`special`] provides their exact
//! normalizing constants and closed-form variance approximations, and
//! [`robust`] supplies Huber-type location/scale inputs for heavy tails.
//! [`realized`] applies marginal aggregation to a return panel to recover
//! the per-period radial path, and [`harness`] drives seeded Monte Carlo
//! studies.

// `!(x > 0.0)` is the NaN-rejecting domain check used throughout.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod blocks;
pub mod cli;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod io;
pub mod model;
pub mod realized;
pub mod rng;
pub mod robust;
pub mod special;

pub use error::{Error, Result};
