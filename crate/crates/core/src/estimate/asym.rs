use nalgebra::{DMatrix, DVector};

use super::engine::State;
use super::ols::{gram_matrix, OLS_PD_FLOOR};
use super::{FitResult, SampleSet};
use crate::error::{CmglError, Result};
use crate::link::{assemble_b, CovMatrix};
use crate::spectral::{sym_inverse, sym_rcond, symmetrize, SymEigen};
use crate::weights::WeightSet;

const INFORMATION_RCOND: f64 = 1e-12;

/// Plug-in sandwich `(np)^{-1} A^{-1} (2 Q + (μ4 - 3) Δ) A^{-1}`.
#[derive(Debug, Clone)]
pub struct AsymptoticCov {
    /// `(K+1) x (K+1)`; rows and columns outside the fitted subset are zero.
    pub vcov: DMatrix<f64>,
    pub mu4: f64,
    /// Outer factor `A` over the fitted subset (`Q̂` for QMLE, the scaled Gram matrix for OLS).
    pub bread: DMatrix<f64>,
    /// Gaussian part `Q` over the fitted subset.
    pub meat: DMatrix<f64>,
    /// Fourth-moment correction `Δ` over the fitted subset.
    pub kurtosis: DMatrix<f64>,
    pub subset: Vec<usize>,
}

/// Asymptotic covariance of the QMLE.
pub fn asym_cov_qmle(fit: &FitResult, y: &SampleSet, weights: &WeightSet) -> Result<AsymptoticCov> {
    let state = State::new(y, weights, fit.link, &fit.beta)?;
    let p = y.p() as f64;
    let active = &fit.subset;
    let divided = state.divided();
    let rotated_w = state.rotated_weights(weights, active);
    let kernel = state.information_kernel(&divided);
    let q = state.trace_information(&rotated_w, &kernel) / p;

    // diag(Σ^{-1/2} ∂_kΣ Σ^{-1/2}) = diag(U [(L∘Ŵ_k) / sqrt(σ_a σ_b)] U').
    let u = &state.eig.vectors;
    let root = state.sigma.map(|s| s.sqrt());
    let diags: Vec<DVector<f64>> = rotated_w
        .iter()
        .map(|w| {
            let a = DMatrix::from_fn(w.nrows(), w.ncols(), |i, j| {
                divided[(i, j)] * w[(i, j)] / (root[i] * root[j])
            });
            row_dot(&(u * a), u)
        })
        .collect();
    let delta = outer_gram(&diags) / p;

    let z = state.standardized();
    let mu4 = fourth_moment(&z);
    sandwich(q.clone(), q, delta, mu4, y, weights, active)
}

/// Asymptotic covariance of the OLS estimator, using the positive definite
/// projection of `Σ(β̂)` for the plug-in terms.
pub fn asym_cov_ols(fit: &FitResult, y: &SampleSet, weights: &WeightSet) -> Result<AsymptoticCov> {
    let p = y.p() as f64;
    let active = &fit.subset;
    let b = assemble_b(weights, &fit.beta)?;
    let sigma = CovMatrix::new(b)?.project_pd(OLS_PD_FLOOR);
    let eig: &SymEigen = sigma.eigen();
    let root = eig.sqrt();
    let inv_root = eig.map(|v| 1.0 / v.sqrt());

    let q0 = gram_matrix(weights, active) / p;
    // tr(Σ W_k Σ W_l) = <A_k, A_l'> with A_k = Σ W_k.
    let products: Vec<DMatrix<f64>> = active
        .iter()
        .map(|&k| weights.mul_dense(k, sigma.matrix()).transpose())
        .collect();
    let m = active.len();
    let mut q1 = DMatrix::zeros(m, m);
    for a in 0..m {
        let t = products[a].transpose();
        for c in a..m {
            let v = t.dot(&products[c]) / p;
            q1[(a, c)] = v;
            q1[(c, a)] = v;
        }
    }
    // diag(R W_k R) with R symmetric: column-wise dots of R and W_k R.
    let diags: Vec<DVector<f64>> = active
        .iter()
        .map(|&k| col_dot(&root, &weights.mul_dense(k, &root)))
        .collect();
    let delta1 = outer_gram(&diags) / p;

    let z = y.matrix() * &inv_root;
    let mu4 = fourth_moment(&z);
    sandwich(q0, q1, delta1, mu4, y, weights, active)
}

fn sandwich(
    bread: DMatrix<f64>,
    meat: DMatrix<f64>,
    kurtosis: DMatrix<f64>,
    mu4: f64,
    y: &SampleSet,
    weights: &WeightSet,
    active: &[usize],
) -> Result<AsymptoticCov> {
    let rcond = sym_rcond(&bread);
    if !(rcond >= INFORMATION_RCOND) {
        return Err(CmglError::SingularInformation { rcond });
    }
    let np = (y.n() * y.p()) as f64;
    let inv = sym_inverse(&bread);
    let middle = &meat * 2.0 + &kurtosis * (mu4 - 3.0);
    let core = symmetrize(&(&inv * middle * &inv)) / np;
    let n_coef = weights.n_coef();
    let mut vcov = DMatrix::zeros(n_coef, n_coef);
    for (a, &k) in active.iter().enumerate() {
        for (b, &l) in active.iter().enumerate() {
            vcov[(k, l)] = core[(a, b)];
        }
    }
    Ok(AsymptoticCov {
        vcov,
        mu4,
        bread,
        meat,
        kurtosis,
        subset: active.to_vec(),
    })
}

/// `(np)^{-1} Σ z⁴`.
fn fourth_moment(z: &DMatrix<f64>) -> f64 {
    z.iter().map(|v| v.powi(4)).sum::<f64>() / z.len() as f64
}

/// `out_i = Σ_a A_ia B_ia`.
fn row_dot(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DVector<f64> {
    a.component_mul(b).column_sum()
}

/// `out_i = Σ_a A_ai B_ai`.
fn col_dot(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_iterator(a.ncols(), a.column_iter().zip(b.column_iter()).map(|(x, y)| x.dot(&y)))
}

fn outer_gram(vs: &[DVector<f64>]) -> DMatrix<f64> {
    let m = vs.len();
    DMatrix::from_fn(m, m, |a, b| vs[a].dot(&vs[b]))
}
