use nalgebra::{DMatrix, DVector};

use super::eval::Evaluator;
use super::{asym_cov_qmle, normalize_subset, Estimator, FitOptions, FitResult, NewtonMethod, SampleSet};
use crate::error::{CmglError, Result};
use crate::link::{BetaVector, Link};
use crate::weights::WeightSet;

/// Armijo sufficient-increase constant.
const ARMIJO: f64 = 1e-4;

/// Gradient reduction ratio above which a scoring step counts as stalled.
const STALL_RATE: f64 = 0.25;
/// Allowed excess of the score over the gradient test when the step test fires.
const STEP_GRAD_SLACK: f64 = 1e3;

/// Starting point: intercept from the mean square of the responses, all
/// weight coefficients zero.
pub fn init_beta(y: &SampleSet, weights: &WeightSet, link: Link) -> Result<BetaVector> {
    y.check_dim(weights.dim())?;
    let m = y.mean_square();
    if m <= 0.0 {
        return Err(CmglError::DegenerateSample("all responses are zero".into()));
    }
    let b0 = match link {
        Link::Identity => m,
        Link::Exponential => m.ln(),
        Link::Square => m.sqrt(),
        Link::Inverse => 1.0 / m,
        Link::Sar => 1.0 / m.sqrt(),
    };
    let mut beta = BetaVector::zeros(weights.n_coef());
    beta.as_mut_slice()[0] = b0;
    Ok(beta)
}

/// QMLE over all `K + 1` coefficients.
pub fn qmle_fit(y: &SampleSet, weights: &WeightSet, link: Link, opts: &FitOptions) -> Result<FitResult> {
    let all: Vec<usize> = (0..weights.n_coef()).collect();
    qmle_fit_subset(y, weights, link, &all, None, opts)
}

/// QMLE with coefficients outside `subset` fixed at zero.
///
/// `start` is used when feasible (its entries outside the subset are zeroed);
/// otherwise the default initialization is tried.
pub fn qmle_fit_subset(
    y: &SampleSet,
    weights: &WeightSet,
    link: Link,
    subset: &[usize],
    start: Option<&BetaVector>,
    opts: &FitOptions,
) -> Result<FitResult> {
    qmle_fit_warm(y, weights, link, subset, start, None, opts).map(|(fit, _)| fit)
}

/// As [`qmle_fit_subset`], optionally seeding the scoring iteration with an
/// information matrix over the subset. The seeded matrix is kept while the
/// gradient keeps falling fast, which avoids recomputing it for nearby refits. Also
/// returns the last information matrix used.
pub(crate) fn qmle_fit_warm(
    y: &SampleSet,
    weights: &WeightSet,
    link: Link,
    subset: &[usize],
    start: Option<&BetaVector>,
    seed_info: Option<DMatrix<f64>>,
    opts: &FitOptions,
) -> Result<(FitResult, Option<DMatrix<f64>>)> {
    let ev = Evaluator::new(y, weights, link)?;
    let active = normalize_subset(subset, weights.n_coef())?;
    let restrict = |b: &BetaVector| {
        let mut out = BetaVector::zeros(weights.n_coef());
        for &k in &active {
            out.as_mut_slice()[k] = b[k];
        }
        out
    };

    let mut candidates = Vec::new();
    if let Some(s) = start {
        if s.len() != weights.n_coef() {
            return Err(CmglError::DimensionMismatch {
                expected: weights.n_coef(),
                actual: s.len(),
            });
        }
        candidates.push(restrict(s));
    }
    candidates.push(init_beta(y, weights, link)?);
    let mut point = candidates
        .iter()
        .find_map(|b| ev.eval(b).ok())
        .ok_or(CmglError::InfeasibleStart)?;

    let seeded = seed_info.as_ref().is_some_and(|m| m.nrows() == active.len());
    let mut info: Option<DMatrix<f64>> = if seeded { seed_info } else { None };
    // Whether `info` was computed at the current point.
    let mut info_fresh = false;
    let mut last_amax = f64::INFINITY;
    let mut history = vec![point.loglik];
    let mut converged = false;
    let mut iterations = 0;
    let mut inv_hessian: Option<DMatrix<f64>> = None;
    let mut last_grad: Option<DVector<f64>> = None;
    let mut last_step: Option<DVector<f64>> = None;
    // Scoring falls back to curvature updates once a step stalls.
    let mut bfgs = opts.method == NewtonMethod::Bfgs;
    let mut prev_fresh = false;
    // Whether the last direction came from information computed at the current point.
    let mut trusted = false;

    while iterations < opts.max_iter {
        let grad = ev.score(&point, &active);
        let amax = grad.amax();
        if amax < opts.tol * (1.0 + point.loglik.abs()) {
            converged = true;
            break;
        }
        let cheap = ev.cheap_information();
        if !bfgs && iterations > 0 && amax > STALL_RATE * last_amax && (prev_fresh || !cheap) {
            // Scoring stalls where the expected information is a poor model of
            // the curvature; continue with updates seeded by the last matrix.
            bfgs = true;
            inv_hessian = info.as_ref().map(pd_inverse);
            trusted = prev_fresh;
        }
        // Cheap information is recomputed at every point; an expensive one is
        // reused while it keeps the gradient falling fast.
        if !bfgs && !info_fresh && !(info.is_some() && !(iterations > 0 && cheap)) {
            info = Some(ev.fisher(&point, &active)?);
            info_fresh = true;
        }
        last_amax = amax;
        prev_fresh = info_fresh;
        let mut direction = if bfgs {
            let h = match (inv_hessian.take(), &last_grad, &last_step) {
                (Some(h), Some(g0), Some(s)) => {
                    trusted = false;
                    bfgs_update(h, s, &(g0 - &grad))
                }
                (Some(h), _, _) => h,
                (None, _, _) => {
                    if info.is_none() {
                        info = Some(ev.fisher(&point, &active)?);
                        info_fresh = true;
                    }
                    trusted = info_fresh;
                    pd_inverse(info.as_ref().expect("information available"))
                }
            };
            let d = &h * &grad;
            inv_hessian = Some(h);
            d
        } else {
            trusted = info_fresh;
            solve_pd(info.as_ref().expect("information available"), &grad)
        };
        let mut slope = grad.dot(&direction);
        if !(slope > 0.0) || !slope.is_finite() {
            inv_hessian = None;
            direction = grad.clone();
            slope = grad.dot(&grad);
        }

        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..=opts.max_halvings {
            let mut cand = point.beta.clone();
            for (idx, &k) in active.iter().enumerate() {
                cand.as_mut_slice()[k] += t * direction[idx];
            }
            if let Ok(next) = ev.eval(&cand) {
                // Strict increase: once `t * slope` is below round-off the
                // sufficient-decrease test alone would accept a standstill.
                if next.loglik >= point.loglik + ARMIJO * t * slope && next.loglik > point.loglik {
                    accepted = Some(next);
                    break;
                }
            }
            t *= 0.5;
        }
        iterations += 1;
        let Some(next) = accepted else {
            if !trusted {
                // Retry from the same point with a current information matrix.
                info = Some(ev.fisher(&point, &active)?);
                info_fresh = true;
                inv_hessian = None;
                last_grad = None;
                continue;
            }
            // No increase is representable: the expected gain is at round-off level.
            converged = slope <= 1e-10 * (1.0 + point.loglik.abs());
            break;
        };
        info_fresh = false;
        // The proposed step, not the backtracked one: heavy backtracking
        // against the feasibility boundary is not convergence.
        let step_norm = direction.norm();
        let step = &direction * t;
        last_grad = Some(grad);
        last_step = Some(step);
        point = next;
        history.push(point.loglik);
        // A short step counts only while the score is near round-off level;
        // next to a singular boundary the steps shrink while the score grows.
        if step_norm < opts.step_tol && amax < STEP_GRAD_SLACK * opts.tol * (1.0 + point.loglik.abs()) {
            converged = true;
            break;
        }
    }

    let mut fit = FitResult {
        estimator: Estimator::Qmle,
        link,
        beta: point.beta.clone(),
        subset: active,
        loglik: Some(point.loglik),
        vcov: Vec::new(),
        sd: Vec::new(),
        mu4_hat: None,
        iterations,
        converged,
        history,
    };
    if opts.inference {
        let cov = asym_cov_qmle(&fit, y, weights)?;
        fit.set_inference(&cov);
    }
    Ok((fit, info))
}

/// Solves `A x = b` for symmetric `A`, falling back to a ridge when Cholesky fails.
fn solve_pd(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let scale = a.diagonal().amax().max(f64::MIN_POSITIVE);
    let mut ridge = 0.0;
    for _ in 0..20 {
        let mut m = a.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += ridge;
        }
        if let Some(ch) = m.cholesky() {
            return ch.solve(b);
        }
        ridge = if ridge == 0.0 { 1e-10 * scale } else { ridge * 10.0 };
    }
    b.clone()
}

fn pd_inverse(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let mut out = DMatrix::zeros(n, n);
    for j in 0..n {
        let e = DVector::from_fn(n, |i, _| if i == j { 1.0 } else { 0.0 });
        out.set_column(j, &solve_pd(a, &e));
    }
    out
}

/// BFGS update of the inverse curvature of `-loglik`; `y` is the decrease in the score.
fn bfgs_update(h: DMatrix<f64>, s: &DVector<f64>, y: &DVector<f64>) -> DMatrix<f64> {
    let sy = s.dot(y);
    if sy <= 1e-12 * s.norm() * y.norm() {
        return h;
    }
    let rho = 1.0 / sy;
    let n = s.len();
    let eye = DMatrix::<f64>::identity(n, n);
    let left = &eye - (s * y.transpose()) * rho;
    let right = &eye - (y * s.transpose()) * rho;
    &left * h * &right + (s * s.transpose()) * rho
}
