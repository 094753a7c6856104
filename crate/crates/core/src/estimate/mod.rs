//! Estimation of CMGL coefficients.
//!
//! * [`qmle_fit`] maximizes the Gaussian-form quasi-loglikelihood with a
//!   line-searched Newton-type iteration (Fisher scoring by default).
//! * [`ols_fit`] is the closed-form least-squares estimator for the
//!   identity link.
//! * [`asym_cov_qmle`] / [`asym_cov_ols`] give plug-in asymptotic
//!   covariances that account for the fourth moment of the innovations.
//!
//! Responses are `n x p`: each row is one replicate of the `p`-vector.

mod asym;
mod engine;
mod eval;
mod ols;
mod qmle;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{CmglError, Result};
use crate::link::{BetaVector, Link};

pub use asym::{asym_cov_ols, asym_cov_qmle, AsymptoticCov};
pub use engine::{quasi_loglik, quasi_score};
pub(crate) use engine::State;
pub(crate) use eval::Evaluator;
pub(crate) use qmle::qmle_fit_warm;
pub use ols::{ols_fit, ols_fit_subset, ols_residual_ss, OLS_PD_FLOOR};
pub use qmle::{init_beta, qmle_fit, qmle_fit_subset};

/// Replicated response vectors, one per row.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    y: DMatrix<f64>,
    centered: bool,
}

impl SampleSet {
    /// Subtracts column means when there is more than one replicate.
    pub fn centered(mut y: DMatrix<f64>) -> Result<Self> {
        check_finite(&y)?;
        let n = y.nrows();
        if n > 1 {
            for mut col in y.column_iter_mut() {
                let mean = col.mean();
                col.add_scalar_mut(-mean);
            }
        }
        Ok(Self { y, centered: n > 1 })
    }

    /// Takes the rows as already mean-zero.
    pub fn mean_zero(y: DMatrix<f64>) -> Result<Self> {
        check_finite(&y)?;
        Ok(Self { y, centered: false })
    }

    /// A single response vector (`n = 1`).
    pub fn single(y: &[f64]) -> Result<Self> {
        Self::mean_zero(DMatrix::from_row_slice(1, y.len(), y))
    }

    pub fn n(&self) -> usize {
        self.y.nrows()
    }

    pub fn p(&self) -> usize {
        self.y.ncols()
    }

    pub fn is_centered(&self) -> bool {
        self.centered
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.y
    }

    /// Replicate `i` as a contiguous vector.
    pub fn row(&self, i: usize) -> Vec<f64> {
        self.y.row(i).iter().copied().collect()
    }

    /// `S = n^{-1} Σ_i Y_i Y_i'`.
    pub fn second_moment(&self) -> DMatrix<f64> {
        self.y.tr_mul(&self.y) / self.n() as f64
    }

    /// Mean of the squared entries, `(np)^{-1} Σ_i ||Y_i||²`.
    pub fn mean_square(&self) -> f64 {
        self.y.norm_squared() / (self.n() * self.p()) as f64
    }

    pub(crate) fn check_dim(&self, p: usize) -> Result<()> {
        if self.p() != p {
            return Err(CmglError::DimensionMismatch {
                expected: p,
                actual: self.p(),
            });
        }
        if self.n() == 0 {
            return Err(CmglError::input("the sample has no replicates"));
        }
        Ok(())
    }
}

fn check_finite(y: &DMatrix<f64>) -> Result<()> {
    if y.iter().any(|v| !v.is_finite()) {
        return Err(CmglError::input("responses contain non-finite values"));
    }
    if y.ncols() < 2 {
        return Err(CmglError::input("responses need dimension p >= 2"));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    Qmle,
    Ols,
}

impl std::str::FromStr for Estimator {
    type Err = CmglError;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "qmle" => Ok(Estimator::Qmle),
            "ols" => Ok(Estimator::Ols),
            other => Err(CmglError::input(format!(
                "unknown estimator {other:?}; expected qmle or ols"
            ))),
        }
    }
}

impl std::fmt::Display for Estimator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Estimator::Qmle => "qmle",
            Estimator::Ols => "ols",
        })
    }
}

/// Search direction used by the QMLE iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NewtonMethod {
    /// Newton step with the expected information in place of the Hessian,
    /// continuing with BFGS updates once the gradient stops falling fast.
    FisherScoring,
    /// BFGS curvature updates seeded with the expected information.
    Bfgs,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitOptions {
    pub max_iter: usize,
    /// Gradient test: `max |score| < tol * (1 + |loglik|)`.
    pub tol: f64,
    pub step_tol: f64,
    pub max_halvings: usize,
    pub method: NewtonMethod,
    /// Compute the asymptotic covariance (and, for OLS, the loglikelihood).
    pub inference: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iter: 200,
            tol: 1e-6,
            step_tol: 1e-10,
            max_halvings: 40,
            method: NewtonMethod::FisherScoring,
            inference: true,
        }
    }
}

impl FitOptions {
    pub fn without_inference(mut self) -> Self {
        self.inference = false;
        self
    }
}

/// Output of [`qmle_fit`] or [`ols_fit`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub estimator: Estimator,
    pub link: Link,
    /// Full-length coefficients; entries outside `subset` are zero.
    pub beta: BetaVector,
    /// Indices of the free coefficients (always contains 0).
    pub subset: Vec<usize>,
    /// Quasi-loglikelihood at `beta`; `None` when `Σ(beta)` is not positive definite.
    pub loglik: Option<f64>,
    /// Row-major `(K+1) x (K+1)` asymptotic covariance; empty when not computed.
    pub vcov: Vec<Vec<f64>>,
    pub sd: Vec<f64>,
    pub mu4_hat: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Quasi-loglikelihood of each accepted iterate.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub history: Vec<f64>,
}

impl FitResult {
    pub fn vcov_matrix(&self) -> Option<DMatrix<f64>> {
        if self.vcov.is_empty() {
            return None;
        }
        let n = self.vcov.len();
        Some(DMatrix::from_fn(n, n, |i, j| self.vcov[i][j]))
    }

    /// Errors with `MaxIterExceeded` unless the fit converged.
    pub fn ensure_converged(&self) -> Result<&Self> {
        if self.converged {
            Ok(self)
        } else {
            Err(CmglError::MaxIterExceeded {
                iterations: self.iterations,
            })
        }
    }

    pub(crate) fn set_inference(&mut self, cov: &AsymptoticCov) {
        let v = &cov.vcov;
        self.vcov = (0..v.nrows())
            .map(|i| v.row(i).iter().copied().collect())
            .collect();
        self.sd = v.diagonal().iter().map(|d| d.max(0.0).sqrt()).collect();
        self.mu4_hat = Some(cov.mu4);
    }
}

/// Validates and normalizes a subset of coefficient indices: sorted, unique,
/// containing the intercept.
pub(crate) fn normalize_subset(subset: &[usize], n_coef: usize) -> Result<Vec<usize>> {
    let mut s: Vec<usize> = subset.to_vec();
    s.push(0);
    s.sort_unstable();
    s.dedup();
    if let Some(&bad) = s.iter().find(|&&k| k >= n_coef) {
        return Err(CmglError::input(format!(
            "coefficient index {bad} out of range for {n_coef} coefficients"
        )));
    }
    Ok(s)
}
