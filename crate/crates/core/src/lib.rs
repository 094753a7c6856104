//! Covariance regression with matrix-valued link functions.
//!
//! A `p x p` covariance is modelled as `Σ(β) = G(β0 I + Σ_k βk W_k)` where the
//! `W_k` are symmetric similarity matrices built from covariates and `G` is a
//! spectral link (identity, exponential, square, inverse or SAR).

// `!(x > 0.0)` style tests are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod estimate;
pub mod io;
pub mod link;
pub mod lrtest;
pub mod portfolio;
pub mod report;
pub mod rng;
pub mod select;
pub mod simlab;
pub mod spectral;
pub mod weights;

pub use error::{CmglError, Result};
pub use estimate::{
    asym_cov_ols, asym_cov_qmle, init_beta, ols_fit, ols_fit_subset, qmle_fit, qmle_fit_subset, quasi_loglik,
    quasi_score, AsymptoticCov, Estimator, FitOptions, FitResult, NewtonMethod, SampleSet,
};
pub use lrtest::{lr_test, Decision, LrTestResult};
pub use select::{backward_select, ebic_ols, ebic_q, ModelSubset, SelectionResult};
pub use link::{assemble_b, dsigma, sigma, BetaVector, CovMatrix, Link};
pub use weights::{
    build_continuous, build_discrete, build_thresholded, covariate_distances, density, CovariateColumn,
    CovariateValues, WeightMatrix, WeightSet,
};
