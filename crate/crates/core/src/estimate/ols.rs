use nalgebra::{DMatrix, DVector};

use super::engine::State;
use super::{asym_cov_ols, normalize_subset, Estimator, FitOptions, FitResult, SampleSet};
use crate::error::{CmglError, Result};
use crate::link::{assemble_b, BetaVector, Link};
use crate::spectral::sym_rcond;
use crate::weights::WeightSet;

/// Eigenvalue floor, relative to the largest, used to make `Σ(β̂_OLS)` positive definite.
pub const OLS_PD_FLOOR: f64 = 1e-6;

const GRAM_RCOND: f64 = 1e-12;

/// Closed-form least squares `min ||S - Σ_k β_k W_k||_F` over all coefficients.
pub fn ols_fit(y: &SampleSet, weights: &WeightSet, opts: &FitOptions) -> Result<FitResult> {
    let all: Vec<usize> = (0..weights.n_coef()).collect();
    ols_fit_subset(y, weights, &all, opts)
}

/// As [`ols_fit`] with coefficients outside `subset` fixed at zero.
pub fn ols_fit_subset(y: &SampleSet, weights: &WeightSet, subset: &[usize], opts: &FitOptions) -> Result<FitResult> {
    y.check_dim(weights.dim())?;
    let active = normalize_subset(subset, weights.n_coef())?;
    let gram = gram_matrix(weights, &active);
    let rcond = sym_rcond(&gram);
    if rcond < GRAM_RCOND {
        return Err(CmglError::SingularGram { rcond });
    }
    let s = y.second_moment();
    let rhs = DVector::from_iterator(active.len(), active.iter().map(|&k| weights.frobenius_dot(k, &s)));
    let coef = gram
        .clone()
        .cholesky()
        .ok_or(CmglError::SingularGram { rcond })?
        .solve(&rhs);
    let mut beta = BetaVector::zeros(weights.n_coef());
    for (idx, &k) in active.iter().enumerate() {
        beta.as_mut_slice()[k] = coef[idx];
    }

    let mut fit = FitResult {
        estimator: Estimator::Ols,
        link: Link::Identity,
        beta,
        subset: active,
        loglik: None,
        vcov: Vec::new(),
        sd: Vec::new(),
        mu4_hat: None,
        iterations: 0,
        converged: true,
        history: Vec::new(),
    };
    if opts.inference {
        fit.loglik = State::new(y, weights, Link::Identity, &fit.beta).ok().map(|s| s.loglik);
        let cov = asym_cov_ols(&fit, y, weights)?;
        fit.set_inference(&cov);
    }
    Ok(fit)
}

/// `tr(W_k W_l)` over the given indices.
pub(crate) fn gram_matrix(weights: &WeightSet, active: &[usize]) -> DMatrix<f64> {
    let m = active.len();
    DMatrix::from_fn(m, m, |a, b| weights.trace_product(active[a], active[b]))
}

/// `||S - Σ_k β_k W_k||_F²`.
pub fn ols_residual_ss(y: &SampleSet, weights: &WeightSet, beta: &BetaVector) -> Result<f64> {
    y.check_dim(weights.dim())?;
    let b = assemble_b(weights, beta)?;
    Ok((y.second_moment() - b).norm_squared())
}
