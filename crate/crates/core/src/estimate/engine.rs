//! Quasi-loglikelihood, score and expected information evaluated in the
//! eigenbasis of `B`.
//!
//! With `B = U diag(λ) U'` every link gives `Σ = U diag(g(λ)) U'`, so the
//! likelihood only needs the rotated responses `Y U`, and derivatives along a
//! weight matrix reduce to Hadamard products with the divided differences of
//! `g` on the spectrum.

use nalgebra::{DMatrix, DVector};

use super::eval::Evaluator;
use super::SampleSet;
use crate::error::{CmglError, Result};
use crate::link::{assemble_b, divided_differences, is_pd_spectrum, BetaVector, Link, PD_TOLERANCE};
use crate::spectral::{symmetrize, SymEigen};
use crate::weights::WeightSet;

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Likelihood ingredients at one coefficient vector.
pub(crate) struct State {
    pub link: Link,
    /// Eigenpairs of `B`.
    pub eig: SymEigen,
    /// Eigenvalues of `Σ`, `g(λ)`.
    pub sigma: DVector<f64>,
    /// `Y U`, one row per replicate.
    pub rotated: DMatrix<f64>,
    pub loglik: f64,
}

impl State {
    pub fn new(y: &SampleSet, weights: &WeightSet, link: Link, beta: &BetaVector) -> Result<Self> {
        y.check_dim(weights.dim())?;
        let b = assemble_b(weights, beta)?;
        if beta.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(CmglError::input("coefficients must be finite"));
        }
        let eig = SymEigen::new(&b);
        let sigma = link_spectrum(link, &eig.values)?;
        let rotated = y.matrix() * &eig.vectors;
        let (n, p) = (y.n() as f64, y.p() as f64);
        let logdet: f64 = sigma.iter().map(|s| s.ln()).sum();
        let mut quad = 0.0;
        for (col, s) in rotated.column_iter().zip(sigma.iter()) {
            quad += col.norm_squared() / s;
        }
        let loglik = -0.5 * n * p * LN_2PI - 0.5 * n * logdet - 0.5 * quad;
        Ok(Self {
            link,
            eig,
            sigma,
            rotated,
            loglik,
        })
    }

    pub fn dim(&self) -> usize {
        self.sigma.len()
    }

    pub fn divided(&self) -> DMatrix<f64> {
        divided_differences(self.link, &self.eig.values)
    }

    /// Score components for the coefficient indices in `active`.
    #[cfg(test)]
    pub fn score(&self, weights: &WeightSet, active: &[usize], divided: &DMatrix<f64>) -> DVector<f64> {
        let n = self.rotated.nrows() as f64;
        let mut scaled = self.rotated.clone();
        for (mut col, s) in scaled.column_iter_mut().zip(self.sigma.iter()) {
            col /= *s;
        }
        // G = ½ L∘(Z̃'Z̃) − (n/2) diag(L_aa / σ_a); score_k = <W_k, U G U'>.
        let mut g = scaled.tr_mul(&scaled).component_mul(divided) * 0.5;
        for a in 0..self.dim() {
            g[(a, a)] -= 0.5 * n * divided[(a, a)] / self.sigma[a];
        }
        let u = &self.eig.vectors;
        let h = symmetrize(&(u * g * u.transpose()));
        DVector::from_iterator(active.len(), active.iter().map(|&k| weights.frobenius_dot(k, &h)))
    }

    /// `U' W_k U` for each active index.
    pub fn rotated_weights(&self, weights: &WeightSet, active: &[usize]) -> Vec<DMatrix<f64>> {
        let u = &self.eig.vectors;
        active
            .iter()
            .map(|&k| match weights.get(k) {
                None => DMatrix::identity(self.dim(), self.dim()),
                Some(w) => u.tr_mul(&w.mul_dense(u)),
            })
            .collect()
    }

    /// `M_ab = L_ab² / (σ_a σ_b)`.
    pub fn information_kernel(&self, divided: &DMatrix<f64>) -> DMatrix<f64> {
        let s = &self.sigma;
        DMatrix::from_fn(self.dim(), self.dim(), |a, b| {
            let l = divided[(a, b)];
            l * l / (s[a] * s[b])
        })
    }

    /// Per-replicate expected information `tr(Σ⁻¹∂_kΣ Σ⁻¹∂_lΣ)` over active indices.
    pub fn trace_information(&self, rotated_w: &[DMatrix<f64>], kernel: &DMatrix<f64>) -> DMatrix<f64> {
        let m = rotated_w.len();
        let weighted: Vec<DMatrix<f64>> = rotated_w.iter().map(|w| w.component_mul(kernel)).collect();
        let mut out = DMatrix::zeros(m, m);
        for k in 0..m {
            for l in k..m {
                let v = rotated_w[k].dot(&weighted[l]);
                out[(k, l)] = v;
                out[(l, k)] = v;
            }
        }
        out
    }

    /// Fisher information of the summed quasi-loglikelihood over active indices.
    pub fn fisher(&self, weights: &WeightSet, active: &[usize], divided: &DMatrix<f64>) -> DMatrix<f64> {
        let rw = self.rotated_weights(weights, active);
        let kernel = self.information_kernel(divided);
        self.trace_information(&rw, &kernel) * (0.5 * self.rotated.nrows() as f64)
    }

    /// `Σ^{-1/2} Y_i` stacked as rows.
    pub fn standardized(&self) -> DMatrix<f64> {
        let mut z = self.rotated.clone();
        for (mut col, s) in z.column_iter_mut().zip(self.sigma.iter()) {
            col /= s.sqrt();
        }
        z * self.eig.vectors.transpose()
    }
}

/// Eigenvalues of `Σ` from those of `B`, or the reason `Σ` is infeasible.
pub(crate) fn link_spectrum(link: Link, values: &DVector<f64>) -> Result<DVector<f64>> {
    if link.needs_inverse() {
        let amax = values.amax();
        let amin = values.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
        if amax == 0.0 || amin <= PD_TOLERANCE * amax {
            return Err(CmglError::SingularB { link: link.name() });
        }
    }
    let sigma = values.map(|v| link.value(v));
    if !is_pd_spectrum(sigma.as_slice()) || sigma.iter().any(|v| !v.is_finite()) {
        return Err(CmglError::NotPositiveDefinite {
            min_eigenvalue: sigma.min(),
        });
    }
    Ok(sigma)
}

/// Error describing why `Σ = G(B)` fails the positive definiteness check.
pub(crate) fn infeasibility(link: Link, b: &DMatrix<f64>) -> CmglError {
    let values = symmetrize(b).symmetric_eigenvalues();
    match link_spectrum(link, &values) {
        Err(e) => e,
        // Numerically borderline: the factorization failed while the spectrum passes.
        Ok(sigma) => CmglError::NotPositiveDefinite {
            min_eigenvalue: sigma.min(),
        },
    }
}

/// Quasi-loglikelihood summed over replicates.
pub fn quasi_loglik(y: &SampleSet, weights: &WeightSet, link: Link, beta: &BetaVector) -> Result<f64> {
    Ok(Evaluator::new(y, weights, link)?.eval(beta)?.loglik)
}

/// Analytic gradient of [`quasi_loglik`] with respect to all `K + 1` coefficients.
pub fn quasi_score(y: &SampleSet, weights: &WeightSet, link: Link, beta: &BetaVector) -> Result<DVector<f64>> {
    let ev = Evaluator::new(y, weights, link)?;
    let all: Vec<usize> = (0..weights.n_coef()).collect();
    Ok(ev.score(&ev.eval(beta)?, &all))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::weights::WeightMatrix;
    use approx::assert_relative_eq;

    fn swap2() -> WeightSet {
        let w = WeightMatrix::from_dense(DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0])).unwrap();
        WeightSet::new(2, vec![w]).unwrap()
    }

    fn beta(v: &[f64]) -> BetaVector {
        BetaVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn loglik_examples() {
        let ws = WeightSet::identity_only(2).unwrap();
        let zero = SampleSet::single(&[0.0, 0.0]).unwrap();
        let l = quasi_loglik(&zero, &ws, Link::Identity, &beta(&[1.0])).unwrap();
        assert_relative_eq!(l, -1.837877, epsilon = 1e-6);
        let ones = SampleSet::single(&[1.0, 1.0]).unwrap();
        let l = quasi_loglik(&ones, &ws, Link::Identity, &beta(&[1.0])).unwrap();
        assert_relative_eq!(l, -2.837877, epsilon = 1e-6);

        // Σ = [[2,1],[1,2]]: det 3, Y'Σ⁻¹Y = (1,-1)·(1,-1)/1 = 2.
        let y = SampleSet::single(&[1.0, -1.0]).unwrap();
        let l = quasi_loglik(&y, &swap2(), Link::Identity, &beta(&[2.0, 1.0])).unwrap();
        let oracle = -LN_2PI - 0.5 * 3f64.ln() - 1.0;
        assert_relative_eq!(l, oracle, epsilon = 1e-12);
        assert_relative_eq!(l, -3.387183, epsilon = 1e-6);
    }

    #[test]
    fn infeasible_points_error() {
        let y = SampleSet::single(&[1.0, -1.0]).unwrap();
        let err = quasi_loglik(&y, &swap2(), Link::Identity, &beta(&[1.0, 2.0])).unwrap_err();
        assert!(matches!(err, CmglError::NotPositiveDefinite { .. }));
        let err = quasi_loglik(&y, &swap2(), Link::Inverse, &beta(&[1.0, 1.0])).unwrap_err();
        assert!(matches!(err, CmglError::SingularB { .. }));
    }

    #[test]
    fn score_vanishes_at_mean_square() {
        let y = SampleSet::single(&[1.0, 2.0, -0.5]).unwrap();
        let ws = WeightSet::identity_only(3).unwrap();
        let b0 = (1.0 + 4.0 + 0.25) / 3.0;
        let s = quasi_score(&y, &ws, Link::Identity, &beta(&[b0])).unwrap();
        assert!(s[0].abs() < 1e-12);
    }

    #[test]
    fn exponential_score_at_zero() {
        let y = SampleSet::single(&[0.0, 0.0]).unwrap();
        let s = quasi_score(&y, &swap2(), Link::Exponential, &beta(&[0.0, 0.0])).unwrap();
        assert_relative_eq!(s[0], -1.0, epsilon = 1e-12);
        assert_relative_eq!(s[1], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn fisher_matches_direct_trace() {
        let y = SampleSet::single(&[0.3, -1.0]).unwrap();
        let ws = swap2();
        let b = beta(&[1.5, 0.4]);
        let state = State::new(&y, &ws, Link::Sar, &b).unwrap();
        let f = state.fisher(&ws, &[0, 1], &state.divided());
        let bm = assemble_b(&ws, &b).unwrap();
        let sig = crate::link::sigma(Link::Sar, &bm).unwrap();
        let inv = sig.matrix().clone().try_inverse().unwrap();
        let d: Vec<DMatrix<f64>> = (0..2)
            .map(|k| crate::link::dsigma_dense(Link::Sar, &bm, &ws.dense(k)).unwrap())
            .collect();
        for k in 0..2 {
            for l in 0..2 {
                let direct = 0.5 * (&inv * &d[k] * &inv * &d[l]).trace();
                assert_relative_eq!(f[(k, l)], direct, max_relative = 1e-10);
            }
        }
    }
}
