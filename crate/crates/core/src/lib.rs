//! Analytic inference for two-way clustered data.
//!
//! Observations are indexed by two clustering dimensions (say industry ×
//! region). The usual cluster variance estimator `V1 + V2 - V12` may fail to
//! be positive semidefinite and the associated tests can be invalid when the
//! estimator is not asymptotically Gaussian. This crate implements the
//! conservative fix: t-tests based on the maximum of the three standard
//! errors, F-tests based on the minimum of the three quadratic forms, plus a
//! Bonferroni variant, confidence intervals and regions, a GMM estimation
//! layer with influence functions, and simulation tooling (finite-sample
//! designs, asymptotic-limit samplers, dyadic-data demonstrations) with a
//! deterministic parallel Monte Carlo harness.
//!
//! Entry points:
//! - [`data`]: CSV ingestion and the cell structure of a clustered sample.
//! - [`moments`]: moment models, GMM fitting, influence matrices.
//! - [`variance`]: the cluster variance estimators and PSD diagnostics.
//! - [`inference`]: t/F/Bonferroni tests, intervals and regions.
//! - [`simulate`]: built-in data generating processes and rejection tables.
//! - [`limits`]: samplers for the asymptotic limit distributions.
//! - [`dyadic`]: variance estimators for pair-indexed (dyadic) data.

pub mod data;
pub mod dyadic;
pub mod error;
pub mod inference;
pub mod limits;
pub mod linalg;
pub mod moments;
pub mod rng;
pub mod simulate;
pub mod variance;

pub use error::{Error, Result};
pub use linalg::{EigenDecomp, SymMatrix};
pub use moments::{FitResult, InfluenceMatrix, MomentModel};
pub use variance::VarianceSet;
