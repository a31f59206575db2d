//! Log-contrast Lasso for compositional covariates observed with
//! multiplicative measurement error, with the simulation and evaluation
//! harness used to compare it against uncorrected and unconstrained fits.

// `!(x > 0.0)` style guards are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod bootstrap;
pub mod composition;
pub mod config;
pub mod error;
pub mod estimators;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod prox;
pub mod simulate;
pub mod solver;
pub mod surrogate;
pub mod tuning;
