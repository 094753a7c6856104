//! Quasi-likelihood ratio test between two non-nested links.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{CmglError, Result};
use crate::estimate::{qmle_fit, FitOptions, FitResult, SampleSet, State};
use crate::link::Link;
use crate::weights::WeightSet;

pub const DEFAULT_ALPHA: f64 = 0.05;

/// Standard deviations below this make the statistic undefined.
const MIN_SIGMA: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    #[serde(rename = "prefer_g1")]
    PreferFirst,
    #[serde(rename = "prefer_g2")]
    PreferSecond,
    Equivalent,
}

impl Decision {
    pub fn swapped(self) -> Self {
        match self {
            Decision::PreferFirst => Decision::PreferSecond,
            Decision::PreferSecond => Decision::PreferFirst,
            Decision::Equivalent => Decision::Equivalent,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrTestResult {
    pub link1: Link,
    pub link2: Link,
    /// `loglik(fit1) - loglik(fit2)`.
    pub t_lr: f64,
    /// `2 (np)^{-1/2} t_lr / sigma_hat`.
    pub z: f64,
    pub sigma_hat: f64,
    pub alpha: f64,
    pub z_alpha: f64,
    pub decision: Decision,
    /// Descriptive KLIC difference `t_lr / (np)`.
    pub klic_diff: f64,
    pub fit1: FitResult,
    pub fit2: FitResult,
}

/// Upper-`alpha` standard normal quantile.
pub fn upper_quantile(alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(CmglError::input(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    Ok(normal.inverse_cdf(1.0 - alpha))
}

fn fit_link(y: &SampleSet, weights: &WeightSet, link: Link, opts: &FitOptions) -> Result<FitResult> {
    let wrap = |e: CmglError| CmglError::FitFailed {
        link: link.name().to_string(),
        source: Box::new(e),
    };
    let fit = qmle_fit(y, weights, link, opts).map_err(wrap)?;
    if !fit.converged {
        return Err(wrap(CmglError::MaxIterExceeded {
            iterations: fit.iterations,
        }));
    }
    Ok(fit)
}

/// `Y_i' Σ⁻¹ Y_i` for every replicate.
fn quadratic_forms(y: &SampleSet, weights: &WeightSet, fit: &FitResult) -> Result<DVector<f64>> {
    let state = State::new(y, weights, fit.link, &fit.beta)?;
    let mut out = DVector::zeros(y.n());
    for (col, s) in state.rotated.column_iter().zip(state.sigma.iter()) {
        out += col.map(|v| v * v / s);
    }
    Ok(out)
}

/// Fits both links and compares them. `opts` controls both fits.
pub fn lr_test(
    y: &SampleSet,
    weights: &WeightSet,
    link1: Link,
    link2: Link,
    alpha: f64,
    opts: &FitOptions,
) -> Result<LrTestResult> {
    if link1 == link2 {
        return Err(CmglError::input("the two links must differ"));
    }
    if y.n() < 2 {
        return Err(CmglError::input("the link test needs at least two replicates"));
    }
    y.check_dim(weights.dim())?;
    let z_alpha = upper_quantile(alpha)?;
    let (fit1, fit2) = rayon::join(
        || fit_link(y, weights, link1, opts),
        || fit_link(y, weights, link2, opts),
    );
    lr_statistic(y, weights, fit1?, fit2?, alpha, z_alpha)
}

/// Assembles the statistic from two converged fits.
pub fn lr_statistic(
    y: &SampleSet,
    weights: &WeightSet,
    fit1: FitResult,
    fit2: FitResult,
    alpha: f64,
    z_alpha: f64,
) -> Result<LrTestResult> {
    let (n, p) = (y.n() as f64, y.p() as f64);
    let l1 = fit1.loglik.ok_or(CmglError::NotPositiveDefinite { min_eigenvalue: f64::NAN })?;
    let l2 = fit2.loglik.ok_or(CmglError::NotPositiveDefinite { min_eigenvalue: f64::NAN })?;
    let t_lr = l1 - l2;
    let diffs = (quadratic_forms(y, weights, &fit1)? - quadratic_forms(y, weights, &fit2)?) / p.sqrt();
    let sigma_hat = sample_sd(diffs.as_slice());
    if !(sigma_hat >= MIN_SIGMA) {
        return Err(CmglError::DegenerateVariance(format!(
            "per-replicate quadratic-form differences have standard deviation {sigma_hat:e}"
        )));
    }
    let z = 2.0 * t_lr / ((n * p).sqrt() * sigma_hat);
    let decision = if z > z_alpha {
        Decision::PreferFirst
    } else if z < -z_alpha {
        Decision::PreferSecond
    } else {
        Decision::Equivalent
    };
    Ok(LrTestResult {
        link1: fit1.link,
        link2: fit2.link,
        t_lr,
        z,
        sigma_hat,
        alpha,
        z_alpha,
        decision,
        klic_diff: t_lr / (n * p),
        fit1,
        fit2,
    })
}

/// Sample standard deviation with the `n - 1` denominator.
pub(crate) fn sample_sd(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    if xs.len() < 2 {
        return 0.0;
    }
    let mean = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}
