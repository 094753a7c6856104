//! EBIC model selection over subsets of weight matrices.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CmglError, Result};
use crate::estimate::{
    ols_fit_subset, ols_residual_ss, qmle_fit_subset, qmle_fit_warm, Estimator, Evaluator, FitOptions, FitResult,
    SampleSet,
};
use crate::link::{BetaVector, Link};
use crate::weights::WeightSet;

/// Default model-space penalty weight.
pub const DEFAULT_GAMMA: f64 = 0.5;

/// Floor on the OLS residual variance inside the logarithm.
const OLS_SIGMA2_FLOOR: f64 = 1e-30;

/// Sorted coefficient indices; always contains the intercept 0.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ModelSubset(Vec<usize>);

impl ModelSubset {
    pub fn new(indices: &[usize], n_coef: usize) -> Result<Self> {
        crate::estimate::normalize_subset(indices, n_coef).map(ModelSubset)
    }

    pub fn full(n_coef: usize) -> Self {
        ModelSubset((0..n_coef.max(1)).collect())
    }

    pub fn intercept_only() -> Self {
        ModelSubset(vec![0])
    }

    /// Subset of `beta`'s nonzero coefficients.
    pub fn support(beta: &BetaVector) -> Self {
        let mut idx: Vec<usize> = (1..beta.len()).filter(|&k| beta[k] != 0.0).collect();
        idx.insert(0, 0);
        ModelSubset(idx)
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    /// `v(s)`, intercept included.
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Number of weight matrices (intercept excluded).
    pub fn weight_count(&self) -> usize {
        self.0.iter().filter(|&&k| k != 0).count()
    }

    pub fn contains(&self, k: usize) -> bool {
        self.0.binary_search(&k).is_ok()
    }

    pub fn without(&self, k: usize) -> Self {
        ModelSubset(self.0.iter().copied().filter(|&j| j != k || j == 0).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionStep {
    pub subset: ModelSubset,
    /// `None` encodes an infinite score (failed or non-converged fit).
    pub ebic: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub chosen: ModelSubset,
    pub chosen_ebic: f64,
    /// Every subset scored, in evaluation order.
    pub trace: Vec<SelectionStep>,
    pub estimator: Estimator,
    pub link: Link,
    pub gamma: f64,
    /// Refit on `chosen`.
    pub fit: FitResult,
}

/// `v log p + 2 v γ log K`.
pub fn ebic_penalty(v: usize, p: usize, k: usize, gamma: f64) -> f64 {
    let v = v as f64;
    v * (p as f64).ln() + 2.0 * v * gamma * (k.max(1) as f64).ln()
}

/// `-2 loglik + penalty`, given a loglikelihood.
pub fn ebic_q_from_loglik(loglik: f64, v: usize, p: usize, k: usize, gamma: f64) -> f64 {
    -2.0 * loglik + ebic_penalty(v, p, k, gamma)
}

/// `ln(max(σ², floor)) + penalty / p²`.
pub fn ebic_ols_from_sigma2(sigma2: f64, v: usize, p: usize, k: usize, gamma: f64) -> f64 {
    sigma2.max(OLS_SIGMA2_FLOOR).ln() + ebic_penalty(v, p, k, gamma) / (p as f64).powi(2)
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma >= 0.0) || !gamma.is_finite() {
        return Err(CmglError::input(format!("gamma must be finite and non-negative, got {gamma}")));
    }
    Ok(())
}

/// EBIC of the QMLE refit on `s`; `+∞` when the refit does not converge.
pub fn ebic_q(y: &SampleSet, weights: &WeightSet, link: Link, s: &ModelSubset, gamma: f64) -> Result<f64> {
    check_gamma(gamma)?;
    let opts = FitOptions::default().without_inference();
    let fit = qmle_fit_subset(y, weights, link, s.indices(), None, &opts)?;
    Ok(score_qmle(&fit, weights, gamma))
}

/// EBIC of the OLS refit on `s`.
pub fn ebic_ols(y: &SampleSet, weights: &WeightSet, s: &ModelSubset, gamma: f64) -> Result<f64> {
    check_gamma(gamma)?;
    let opts = FitOptions::default().without_inference();
    let fit = ols_fit_subset(y, weights, s.indices(), &opts)?;
    score_ols(&fit, y, weights, gamma)
}

fn score_qmle(fit: &FitResult, weights: &WeightSet, gamma: f64) -> f64 {
    match (fit.converged, fit.loglik) {
        (true, Some(l)) => ebic_q_from_loglik(l, fit.subset.len(), weights.dim(), weights.k(), gamma),
        _ => f64::INFINITY,
    }
}

fn score_ols(fit: &FitResult, y: &SampleSet, weights: &WeightSet, gamma: f64) -> Result<f64> {
    let p = weights.dim();
    let sigma2 = ols_residual_ss(y, weights, &fit.beta)? / (p * p) as f64;
    Ok(ebic_ols_from_sigma2(sigma2, fit.subset.len(), p, weights.k(), gamma))
}

struct Scored {
    ebic: f64,
    fit: Option<FitResult>,
    /// Last information matrix of a QMLE fit, over the subset.
    info: Option<DMatrix<f64>>,
}

/// Drops row and column `pos` of a symmetric matrix.
fn drop_index(m: &DMatrix<f64>, pos: usize) -> DMatrix<f64> {
    m.clone().remove_row(pos).remove_column(pos)
}

#[allow(clippy::too_many_arguments)]
fn score_subset(
    y: &SampleSet,
    weights: &WeightSet,
    link: Link,
    estimator: Estimator,
    s: &ModelSubset,
    start: Option<&BetaVector>,
    seed_info: Option<DMatrix<f64>>,
    gamma: f64,
) -> Result<Scored> {
    let opts = FitOptions::default().without_inference();
    let attempt = match estimator {
        Estimator::Qmle => qmle_fit_warm(y, weights, link, s.indices(), start, seed_info, &opts)
            .map(|(fit, info)| (score_qmle(&fit, weights, gamma), fit, info)),
        Estimator::Ols => ols_fit_subset(y, weights, s.indices(), &opts)
            .and_then(|fit| Ok((score_ols(&fit, y, weights, gamma)?, fit, None))),
    };
    match attempt {
        Ok((ebic, fit, info)) => Ok(Scored {
            ebic,
            fit: Some(fit),
            info,
        }),
        Err(e) if e.is_usage() => Err(e),
        Err(e) => {
            log::debug!("subset {:?} scored +inf: {e}", s.indices());
            Ok(Scored {
                ebic: f64::INFINITY,
                fit: None,
                info: None,
            })
        }
    }
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

/// Backward elimination from the full model. `link` is ignored for OLS,
/// which always uses the identity link.
pub fn backward_select(
    y: &SampleSet,
    weights: &WeightSet,
    link: Link,
    gamma: f64,
    estimator: Estimator,
) -> Result<SelectionResult> {
    backward_select_from(y, weights, link, gamma, estimator, None)
}

/// As [`backward_select`], reusing an existing fit of the full model.
pub fn backward_select_from(
    y: &SampleSet,
    weights: &WeightSet,
    link: Link,
    gamma: f64,
    estimator: Estimator,
    full_fit: Option<&FitResult>,
) -> Result<SelectionResult> {
    check_gamma(gamma)?;
    y.check_dim(weights.dim())?;
    let link = match estimator {
        Estimator::Ols => Link::Identity,
        Estimator::Qmle => link,
    };
    let mut current = ModelSubset::full(weights.n_coef());
    let first = match full_fit {
        Some(fit) if fit.subset == current.indices() && fit.estimator == estimator && fit.link == link => {
            let ebic = match estimator {
                Estimator::Qmle => score_qmle(fit, weights, gamma),
                Estimator::Ols => score_ols(fit, y, weights, gamma)?,
            };
            Scored {
                ebic,
                fit: Some(fit.clone()),
                info: None,
            }
        }
        _ => score_subset(y, weights, link, estimator, &current, None, None, gamma)?,
    };
    let mut current_ebic = first.ebic;
    let mut current_fit = first.fit;
    let mut current_info = first.info;
    let mut trace = vec![SelectionStep {
        subset: current.clone(),
        ebic: finite(current_ebic),
    }];

    loop {
        let removable: Vec<usize> = current.indices().iter().copied().filter(|&k| k != 0).collect();
        if removable.is_empty() {
            break;
        }
        let start = current_fit.as_ref().map(|f| f.beta.clone());
        // Candidates start from the parent's coefficients and information, each
        // dropping one index; the parent is a close approximation for them.
        if estimator == Estimator::Qmle && current_info.is_none() {
            if let Some(b) = &start {
                let ev = Evaluator::new(y, weights, link)?;
                current_info = ev.eval(b).and_then(|pt| ev.fisher(&pt, current.indices())).ok();
            }
        }
        let scored: Vec<(usize, ModelSubset, Scored)> = removable
            .par_iter()
            .map(|&k| {
                let s = current.without(k);
                let seed = current_info.as_ref().and_then(|m| {
                    let pos = current.indices().iter().position(|&j| j == k)?;
                    Some(drop_index(m, pos))
                });
                let r = score_subset(y, weights, link, estimator, &s, start.as_ref(), seed, gamma)?;
                Ok((k, s, r))
            })
            .collect::<Result<Vec<_>>>()?;
        for (_, s, r) in &scored {
            trace.push(SelectionStep {
                subset: s.clone(),
                ebic: finite(r.ebic),
            });
        }
        // Lowest score; ties go to the largest removed index.
        let best = scored
            .into_iter()
            .filter(|(_, _, r)| r.ebic.is_finite())
            .min_by(|a, b| a.2.ebic.total_cmp(&b.2.ebic).then(b.0.cmp(&a.0)));
        match best {
            Some((_, s, r)) if r.ebic < current_ebic => {
                current = s;
                current_ebic = r.ebic;
                current_fit = r.fit;
                current_info = r.info;
            }
            _ => break,
        }
    }

    if !current_ebic.is_finite() {
        return Err(CmglError::FitFailed {
            link: link.name().to_string(),
            source: Box::new(CmglError::MaxIterExceeded { iterations: 0 }),
        });
    }
    let opts = FitOptions::default();
    let fit = match estimator {
        Estimator::Qmle => {
            let start = current_fit.as_ref().map(|f| f.beta.clone());
            qmle_fit_subset(y, weights, link, current.indices(), start.as_ref(), &opts)?
        }
        Estimator::Ols => ols_fit_subset(y, weights, current.indices(), &opts)?,
    };
    Ok(SelectionResult {
        chosen: current,
        chosen_ebic: current_ebic,
        trace,
        estimator,
        link,
        gamma,
        fit,
    })
}

/// Minimum-EBIC subset over all `2^K` subsets containing the intercept.
pub fn exhaustive_select(
    y: &SampleSet,
    weights: &WeightSet,
    link: Link,
    gamma: f64,
    estimator: Estimator,
) -> Result<(ModelSubset, f64)> {
    check_gamma(gamma)?;
    let k = weights.k();
    if k > 20 {
        return Err(CmglError::input("exhaustive search is limited to K <= 20"));
    }
    let subsets: Vec<ModelSubset> = (0u32..(1 << k))
        .map(|mask| {
            let mut idx = vec![0];
            idx.extend((0..k).filter(|j| mask & (1 << j) != 0).map(|j| j + 1));
            ModelSubset(idx)
        })
        .collect();
    let scores = subsets
        .par_iter()
        .map(|s| score_subset(y, weights, link, estimator, s, None, None, gamma).map(|r| r.ebic))
        .collect::<Result<Vec<f64>>>()?;
    subsets
        .into_iter()
        .zip(scores)
        .filter(|(_, e)| e.is_finite())
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.len().cmp(&b.0.len())))
        .ok_or(CmglError::InfeasibleStart)
}
