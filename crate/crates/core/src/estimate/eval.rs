//! Likelihood evaluation without eigendecompositions.
//!
//! For the identity, inverse, square and SAR links the likelihood, score and
//! expected information follow from a Cholesky or LU factor of `B` and the
//! sparse weight products. For the exponential link `log det Σ = tr B` and
//! `Σ^{-1} Y = exp(-B) Y` is applied with a truncated Taylor series on the
//! sparse part of `B`; the score integrates the Fréchet derivative
//! `∫ exp(sB) W exp((1-s)B) ds` by Gauss–Legendre quadrature.

use std::cell::OnceCell;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, LU};

use super::engine::{infeasibility, State};
use super::SampleSet;
use crate::error::{CmglError, Result};
use crate::link::{assemble_b, BetaVector, Link};
use crate::weights::WeightSet;

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Pivot ratio below which an LU factor is treated as singular.
const LU_PIVOT_RCOND: f64 = 1e-12;

/// Taylor substep norm bound for `exp(-hB') X`.
const TAYLOR_STEP: f64 = 1.0;
const TAYLOR_MAX_TERMS: usize = 60;

enum Factor {
    Chol(Cholesky<f64, Dyn>),
    Lu(LU<f64, Dyn, Dyn>),
}

enum Detail {
    /// Factor of `B` plus the link-specific solves of the responses.
    Factored {
        factor: Factor,
        /// identity: `B⁻¹Y`; square: `B⁻¹Y`; sar: `BY`; inverse: unused.
        first: DMatrix<f64>,
        /// square: `B⁻²Y`.
        second: Option<DMatrix<f64>>,
    },
    Exponential {
        /// Off-diagonal part of `B` as upper-triangle triples.
        offdiag: Vec<(usize, usize, f64)>,
        bound: f64,
    },
}

/// Quasi-loglikelihood at one coefficient vector, with what the score needs.
pub(crate) struct Point {
    pub beta: BetaVector,
    pub loglik: f64,
    detail: Detail,
    inverse: OnceCell<DMatrix<f64>>,
}

impl Point {
    fn new(beta: &BetaVector, loglik: f64, detail: Detail) -> Self {
        Self {
            beta: beta.clone(),
            loglik,
            detail,
            inverse: OnceCell::new(),
        }
    }

    /// `B⁻¹`, computed once from the factor.
    fn b_inverse(&self, factor: &Factor) -> &DMatrix<f64> {
        self.inverse.get_or_init(|| factor_inverse(factor))
    }
}

/// Likelihood evaluator for fixed data, weights and link.
pub(crate) struct Evaluator<'a> {
    pub y: &'a SampleSet,
    pub weights: &'a WeightSet,
    pub link: Link,
    /// Responses as columns, `p x n`.
    yt: DMatrix<f64>,
}

impl<'a> Evaluator<'a> {
    /// Whether the expected information is cheap relative to an evaluation.
    pub fn cheap_information(&self) -> bool {
        self.link != Link::Exponential
    }

    pub fn new(y: &'a SampleSet, weights: &'a WeightSet, link: Link) -> Result<Self> {
        y.check_dim(weights.dim())?;
        Ok(Self {
            y,
            weights,
            link,
            yt: y.matrix().transpose(),
        })
    }

    fn n(&self) -> f64 {
        self.y.n() as f64
    }

    fn constant(&self) -> f64 {
        -0.5 * self.n() * self.y.p() as f64 * LN_2PI
    }

    /// `B X` through the sparse weights.
    fn b_mul(&self, beta: &BetaVector, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = x * beta[0];
        for (k, w) in self.weights.matrices().iter().enumerate() {
            let c = beta[k + 1];
            if c != 0.0 {
                out += w.mul_dense(x) * c;
            }
        }
        out
    }

    pub fn eval(&self, beta: &BetaVector) -> Result<Point> {
        if beta.len() != self.weights.n_coef() {
            return Err(CmglError::DimensionMismatch {
                expected: self.weights.n_coef(),
                actual: beta.len(),
            });
        }
        if self.link == Link::Exponential {
            return self.eval_exponential(beta);
        }
        let b = assemble_b(self.weights, beta)?;
        let infeasible = || infeasibility(self.link, &b);
        let (factor, logdet_b) = match self.link {
            Link::Identity | Link::Inverse => {
                let chol = b.clone().cholesky().ok_or_else(infeasible)?;
                let diag = chol.l_dirty().diagonal();
                if !pivots_ok(diag.as_slice(), 2) {
                    return Err(infeasible());
                }
                let ld = 2.0 * diag.iter().map(|v| v.ln()).sum::<f64>();
                (Factor::Chol(chol), ld)
            }
            _ => {
                let lu = b.clone().lu();
                let u = lu.u();
                let diag = u.diagonal();
                if !pivots_ok(diag.as_slice(), 1) {
                    return Err(infeasible());
                }
                let ld = diag.iter().map(|v| v.abs().ln()).sum::<f64>();
                (Factor::Lu(lu), ld)
            }
        };
        let n = self.n();
        let (logdet, quad, first, second) = match (self.link, &factor) {
            (Link::Identity, Factor::Chol(c)) => {
                let z = c.solve(&self.yt);
                let q = self.yt.dot(&z);
                (logdet_b, q, z, None)
            }
            (Link::Inverse, _) => {
                let by = self.b_mul(beta, &self.yt);
                let q = self.yt.dot(&by);
                (-logdet_b, q, DMatrix::zeros(0, 0), None)
            }
            (Link::Sar, _) => {
                let by = self.b_mul(beta, &self.yt);
                let q = by.norm_squared();
                (-2.0 * logdet_b, q, by, None)
            }
            (Link::Square, Factor::Lu(lu)) => {
                let v = lu.solve(&self.yt).ok_or_else(infeasible)?;
                let z = lu.solve(&v).ok_or_else(infeasible)?;
                let q = v.norm_squared();
                (2.0 * logdet_b, q, v, Some(z))
            }
            _ => unreachable!("factor kind matches the link"),
        };
        let loglik = self.constant() - 0.5 * n * logdet - 0.5 * quad;
        if !loglik.is_finite() {
            return Err(infeasible());
        }
        Ok(Point::new(beta, loglik, Detail::Factored { factor, first, second }))
    }

    fn eval_exponential(&self, beta: &BetaVector) -> Result<Point> {
        let (offdiag, bound) = offdiagonal(self.weights, beta);
        let u1 = expmv(&offdiag, bound, beta[0], 1.0, &self.yt);
        let quad = self.yt.dot(&u1);
        let logdet = self.y.p() as f64 * beta[0];
        let loglik = self.constant() - 0.5 * self.n() * logdet - 0.5 * quad;
        if !loglik.is_finite() || u1.iter().any(|v| !v.is_finite()) {
            return Err(CmglError::NotPositiveDefinite { min_eigenvalue: 0.0 });
        }
        Ok(Point::new(beta, loglik, Detail::Exponential { offdiag, bound }))
    }

    /// Score components for the coefficient indices in `active`.
    pub fn score(&self, pt: &Point, active: &[usize]) -> DVector<f64> {
        let n = self.n();
        let ws = self.weights;
        match &pt.detail {
            Detail::Exponential { offdiag, bound } => {
                let (nodes, wts) = gauss_legendre(quadrature_nodes(2.0 * bound));
                // u(s) = exp(-sB) Y at every node; nodes are symmetric about 1/2.
                let mut path = Vec::with_capacity(nodes.len());
                let mut prev = 0.0;
                let mut cur = self.yt.clone();
                for &s in &nodes {
                    cur = expmv(offdiag, *bound, pt.beta[0], s - prev, &cur);
                    path.push(cur.clone());
                    prev = s;
                }
                let m = nodes.len();
                let quad_full = self.yt.dot(&expmv(offdiag, *bound, pt.beta[0], 1.0 - prev, &cur));
                DVector::from_iterator(
                    active.len(),
                    active.iter().map(|&k| {
                        if k == 0 {
                            return -0.5 * n * self.y.p() as f64 + 0.5 * quad_full;
                        }
                        let w = ws.get(k).expect("weight index");
                        let mut acc = 0.0;
                        for j in 0..m {
                            acc += wts[j] * path[m - 1 - j].dot(&w.mul_dense(&path[j]));
                        }
                        0.5 * acc
                    }),
                )
            }
            Detail::Factored { factor, first, second } => {
                let binv = pt.b_inverse(factor);
                let traces = |k: usize| ws.frobenius_dot(k, binv);
                let bilinear = |k: usize, a: &DMatrix<f64>, c: &DMatrix<f64>| a.dot(&ws.mul_dense(k, c));
                DVector::from_iterator(
                    active.len(),
                    active.iter().map(|&k| match self.link {
                        Link::Identity => -0.5 * n * traces(k) + 0.5 * bilinear(k, first, first),
                        Link::Inverse => 0.5 * n * traces(k) - 0.5 * bilinear(k, &self.yt, &self.yt),
                        Link::Sar => n * traces(k) - bilinear(k, first, &self.yt),
                        Link::Square => {
                            -n * traces(k) + bilinear(k, first, second.as_ref().expect("square solve"))
                        }
                        Link::Exponential => unreachable!(),
                    }),
                )
            }
        }
    }

    /// Expected information of the summed quasi-loglikelihood over `active`.
    pub fn fisher(&self, pt: &Point, active: &[usize]) -> Result<DMatrix<f64>> {
        let factor = match &pt.detail {
            Detail::Exponential { .. } => {
                let state = State::new(self.y, self.weights, self.link, &pt.beta)?;
                return Ok(state.fisher(self.weights, active, &state.divided()));
            }
            Detail::Factored { factor, .. } => factor,
        };
        let binv = pt.b_inverse(factor);
        // N_k = W_k B⁻¹ and T_k = N_k' = B⁻¹ W_k.
        let nk: Vec<DMatrix<f64>> = active.iter().map(|&k| self.weights.mul_dense(k, binv)).collect();
        let tk: Vec<DMatrix<f64>> = nk.iter().map(|m| m.transpose()).collect();
        let m = active.len();
        let n = self.n();
        let mut out = DMatrix::zeros(m, m);
        for a in 0..m {
            for c in a..m {
                let base = tk[a].dot(&nk[c]);
                let v = match self.link {
                    Link::Identity | Link::Inverse => 0.5 * n * base,
                    _ => n * (base + nk[a].dot(&nk[c])),
                };
                out[(a, c)] = v;
                out[(c, a)] = v;
            }
        }
        Ok(out)
    }
}

fn pivots_ok(diag: &[f64], power: i32) -> bool {
    let abs: Vec<f64> = diag.iter().map(|v| v.abs().powi(power)).collect();
    let max = abs.iter().cloned().fold(0.0, f64::max);
    let min = abs.iter().cloned().fold(f64::INFINITY, f64::min);
    max > 0.0 && max.is_finite() && min > LU_PIVOT_RCOND * max
}

fn factor_inverse(f: &Factor) -> DMatrix<f64> {
    match f {
        Factor::Chol(c) => c.inverse(),
        Factor::Lu(lu) => lu.try_inverse().expect("factor checked nonsingular"),
    }
}

/// Off-diagonal triples of `B` and a bound on its spectral norm (max absolute row sum).
fn offdiagonal(weights: &WeightSet, beta: &BetaVector) -> (Vec<(usize, usize, f64)>, f64) {
    let p = weights.dim();
    let mut triples = Vec::new();
    let mut rows = vec![0.0; p];
    for (k, w) in weights.matrices().iter().enumerate() {
        let c = beta[k + 1];
        if c == 0.0 {
            continue;
        }
        for &(i, j, v) in w.pairs() {
            let x = c * v;
            triples.push((i, j, x));
            rows[i] += x.abs();
            rows[j] += x.abs();
        }
    }
    (triples, rows.into_iter().fold(0.0, f64::max))
}

fn sparse_mul(triples: &[(usize, usize, f64)], x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(x.nrows(), x.ncols());
    for c in 0..x.ncols() {
        let src = x.column(c);
        let mut dst = out.column_mut(c);
        for &(i, j, v) in triples {
            dst[i] += v * src[j];
            dst[j] += v * src[i];
        }
    }
    out
}

/// `exp(-h B) X` with `B = b0 I + offdiag`.
fn expmv(triples: &[(usize, usize, f64)], bound: f64, b0: f64, h: f64, x: &DMatrix<f64>) -> DMatrix<f64> {
    if h == 0.0 {
        return x.clone();
    }
    let steps = ((h * bound) / TAYLOR_STEP).ceil().max(1.0) as usize;
    let dt = h / steps as f64;
    let mut acc = x.clone();
    for _ in 0..steps {
        let mut term = acc.clone();
        let mut sum = acc.clone();
        for j in 1..=TAYLOR_MAX_TERMS {
            term = sparse_mul(triples, &term) * (-dt / j as f64);
            sum += &term;
            if term.amax() <= f64::EPSILON * 1e-2 * sum.amax() {
                break;
            }
        }
        acc = sum;
    }
    acc * (-h * b0).exp()
}

/// Number of Gauss–Legendre nodes for integrands `exp(d s)` on `[0, 1]` with `|d| <= spread`.
fn quadrature_nodes(spread: f64) -> usize {
    // Error of the m-point rule on exp(ds): d^{2m} (m!)^4 / ((2m+1) ((2m)!)^3), up to exp(|d|).
    let mut m = 4;
    while m < 80 {
        let mut log_err = 2.0 * m as f64 * spread.max(1e-3).ln() - (2.0 * m as f64 + 1.0).ln() + spread;
        log_err += 4.0 * ln_factorial(m) - 3.0 * ln_factorial(2 * m);
        if log_err < (1e-15f64).ln() {
            break;
        }
        m += 1;
    }
    m
}

fn ln_factorial(m: usize) -> f64 {
    (2..=m).map(|v| (v as f64).ln()).sum()
}

/// Nodes and weights of the `m`-point Gauss–Legendre rule on `[0, 1]`, nodes ascending.
pub(crate) fn gauss_legendre(m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; m];
    let mut weights = vec![0.0; m];
    for i in 0..m.div_ceil(2) {
        // Newton iteration on P_m from the Chebyshev-like initial guess.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut deriv = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=m {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let pm = if m == 0 { 1.0 } else { p1 };
            let pm1 = if m == 1 { 1.0 } else { p0 };
            deriv = m as f64 * (x * pm - pm1) / (x * x - 1.0);
            let dx = pm / deriv;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * deriv * deriv);
        // x is the i-th largest root on [-1, 1].
        nodes[m - 1 - i] = 0.5 * (1.0 + x);
        nodes[i] = 0.5 * (1.0 - x);
        weights[m - 1 - i] = 0.5 * w;
        weights[i] = 0.5 * w;
    }
    (nodes, weights)
}
