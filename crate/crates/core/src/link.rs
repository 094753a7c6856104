//! Link functions `Σ = G(B)` with `B = β0 I + Σ_k βk W_k`.
//!
//! All five supported links act spectrally on symmetric `B`: if
//! `B = U diag(λ) U'` then `G(B) = U diag(g(λ)) U'` with
//!
//! | link        | g(λ)   |
//! |-------------|--------|
//! | identity    | λ      |
//! | exponential | e^λ    |
//! | square      | λ²     |
//! | inverse     | 1/λ    |
//! | sar         | 1/λ²   |
//!
//! so the first derivative along `W` is `U (L ∘ U'WU) U'` where `L` holds the
//! first divided differences of `g` on the eigenvalues.

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{CmglError, Result};
use crate::spectral::{symmetrize, SymEigen};
use crate::weights::{WeightMatrix, WeightSet};

/// Relative eigenvalue floor below which a matrix is not treated as positive definite.
pub const PD_TOLERANCE: f64 = 1e-10;

/// Eigenvalue gap below which the exponential divided difference uses its limit.
const EXP_DEGENERATE_GAP: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Link {
    Identity,
    Exponential,
    Square,
    Inverse,
    Sar,
}

impl Link {
    pub const ALL: [Link; 5] = [
        Link::Identity,
        Link::Exponential,
        Link::Square,
        Link::Inverse,
        Link::Sar,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Link::Identity => "identity",
            Link::Exponential => "exponential",
            Link::Square => "square",
            Link::Inverse => "inverse",
            Link::Sar => "sar",
        }
    }

    /// Scalar function applied to each eigenvalue of `B`.
    pub fn value(self, x: f64) -> f64 {
        match self {
            Link::Identity => x,
            Link::Exponential => x.exp(),
            Link::Square => x * x,
            Link::Inverse => 1.0 / x,
            Link::Sar => 1.0 / (x * x),
        }
    }

    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Link::Identity => 1.0,
            Link::Exponential => x.exp(),
            Link::Square => 2.0 * x,
            Link::Inverse => -1.0 / (x * x),
            Link::Sar => -2.0 / (x * x * x),
        }
    }

    /// First divided difference `(g(a) - g(b)) / (a - b)`, `g'(a)` when `a == b`.
    pub fn divided_difference(self, a: f64, b: f64) -> f64 {
        match self {
            Link::Identity => 1.0,
            Link::Square => a + b,
            Link::Inverse => -1.0 / (a * b),
            Link::Sar => -(a + b) / (a * a * b * b),
            Link::Exponential => {
                let gap = a - b;
                if gap.abs() < EXP_DEGENERATE_GAP {
                    (0.5 * (a + b)).exp()
                } else {
                    b.exp() * gap.exp_m1() / gap
                }
            }
        }
    }

    /// Whether `B` must be invertible for the link to be defined.
    pub fn needs_inverse(self) -> bool {
        matches!(self, Link::Inverse | Link::Sar)
    }
}

impl fmt::Display for Link {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Link {
    type Err = CmglError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "identity" | "linear" => Ok(Link::Identity),
            "exponential" | "exp" => Ok(Link::Exponential),
            "square" => Ok(Link::Square),
            "inverse" => Ok(Link::Inverse),
            "sar" => Ok(Link::Sar),
            other => Err(CmglError::input(format!(
                "unknown link {other:?}; expected identity, exponential, square, inverse or sar"
            ))),
        }
    }
}

/// Coefficients `(β0, β1, ..., βK)`; index 0 multiplies the identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BetaVector(Vec<f64>);

impl BetaVector {
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(CmglError::input("beta needs at least the intercept"));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(CmglError::input("beta has non-finite coefficients"));
        }
        Ok(Self(coeffs))
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len.max(1)])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn intercept(&self) -> f64 {
        self.0[0]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn to_dvector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.0)
    }
}

impl std::ops::Index<usize> for BetaVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// `B = β0 I + Σ_k βk W_k`.
pub fn assemble_b(weights: &WeightSet, beta: &BetaVector) -> Result<DMatrix<f64>> {
    if beta.len() != weights.n_coef() {
        return Err(CmglError::DimensionMismatch {
            expected: weights.n_coef(),
            actual: beta.len(),
        });
    }
    let p = weights.dim();
    let mut b = DMatrix::from_diagonal_element(p, p, beta[0]);
    for (k, w) in weights.matrices().iter().enumerate() {
        let coef = beta[k + 1];
        if coef == 0.0 {
            continue;
        }
        for &(i, j, v) in w.pairs() {
            b[(i, j)] += coef * v;
            b[(j, i)] += coef * v;
        }
    }
    Ok(b)
}

/// A covariance matrix with a lazily computed eigendecomposition.
#[derive(Debug, Clone)]
pub struct CovMatrix {
    entries: DMatrix<f64>,
    eigen: OnceLock<SymEigen>,
}

impl CovMatrix {
    /// Wraps a matrix after symmetrizing it.
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        if entries.nrows() != entries.ncols() {
            return Err(CmglError::DimensionMismatch {
                expected: entries.nrows(),
                actual: entries.ncols(),
            });
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(CmglError::input("covariance matrix has non-finite entries"));
        }
        Ok(Self::from_parts(symmetrize(&entries), None))
    }

    pub(crate) fn from_parts(entries: DMatrix<f64>, eigen: Option<SymEigen>) -> Self {
        let cell = OnceLock::new();
        if let Some(e) = eigen {
            let _ = cell.set(e);
        }
        Self {
            entries,
            eigen: cell,
        }
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.entries
    }

    pub fn eigen(&self) -> &SymEigen {
        self.eigen.get_or_init(|| SymEigen::new(&self.entries))
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigen().min_value()
    }

    /// Smallest eigenvalue above `PD_TOLERANCE` times the largest.
    pub fn is_positive_definite(&self) -> bool {
        is_pd_spectrum(self.eigen().values.as_slice())
    }

    /// Clamps eigenvalues at `floor_ratio * λ_max`.
    pub fn project_pd(&self, floor_ratio: f64) -> CovMatrix {
        let eig = self.eigen();
        let floor = floor_ratio * eig.max_value().max(f64::MIN_POSITIVE);
        let values = eig.values.map(|v| v.max(floor));
        let projected = SymEigen {
            values,
            vectors: eig.vectors.clone(),
        };
        let entries = projected.map(|v| v);
        CovMatrix::from_parts(entries, Some(projected))
    }
}

pub(crate) fn is_pd_spectrum(values: &[f64]) -> bool {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    max > 0.0 && min > PD_TOLERANCE * max
}

fn inverse_of(link: Link, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let inv = b
        .clone()
        .try_inverse()
        .ok_or(CmglError::SingularB { link: link.name() })?;
    if inv.iter().any(|v| !v.is_finite()) {
        return Err(CmglError::SingularB { link: link.name() });
    }
    Ok(inv)
}

/// `Σ = G(B)`. Non positive definite results are returned as-is; callers decide.
pub fn sigma(link: Link, b: &DMatrix<f64>) -> Result<CovMatrix> {
    let out = match link {
        Link::Identity => b.clone(),
        Link::Square => b * b,
        Link::Inverse => inverse_of(link, b)?,
        Link::Sar => {
            let inv = inverse_of(link, b)?;
            &inv * inv.transpose()
        }
        Link::Exponential => {
            let eig = SymEigen::new(b);
            let values = eig.values.map(f64::exp);
            let sig = SymEigen {
                values,
                vectors: eig.vectors,
            };
            let entries = sig.map(|v| v);
            return Ok(CovMatrix::from_parts(entries, Some(sig)));
        }
    };
    CovMatrix::new(out)
}

/// Matrix of divided differences `L_ij` of the link on the eigenvalues.
pub fn divided_differences(link: Link, values: &DVector<f64>) -> DMatrix<f64> {
    let p = values.len();
    DMatrix::from_fn(p, p, |i, j| {
        if i == j {
            link.derivative(values[i])
        } else {
            link.divided_difference(values[i], values[j])
        }
    })
}

/// `∂Σ/∂βk` along the weight matrix `w`, using each link's closed form.
pub fn dsigma(link: Link, b: &DMatrix<f64>, w: &WeightMatrix) -> Result<DMatrix<f64>> {
    dsigma_dense(link, b, w.as_matrix())
}

/// As [`dsigma`] for any symmetric direction (e.g. the identity for β0).
pub fn dsigma_dense(link: Link, b: &DMatrix<f64>, w: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let d = match link {
        Link::Identity => w.clone(),
        Link::Square => w * b + b * w,
        Link::Inverse => {
            let inv = inverse_of(link, b)?;
            -(&inv * w * &inv)
        }
        Link::Sar => {
            let inv = inverse_of(link, b)?;
            let inv_t = inv.transpose();
            let gram = &inv * &inv_t;
            -(&inv * w * &gram) - (&gram * w.transpose() * &inv_t)
        }
        Link::Exponential => {
            let eig = SymEigen::new(b);
            let l = divided_differences(link, &eig.values);
            let rotated = eig.vectors.transpose() * w * &eig.vectors;
            &eig.vectors * l.component_mul(&rotated) * eig.vectors.transpose()
        }
    };
    Ok(symmetrize(&d))
}

/// `(log det S, S^{-1})` from the eigenvalues of `S`.
pub fn logdet_and_inverse(s: &CovMatrix) -> Result<(f64, DMatrix<f64>)> {
    let eig = s.eigen();
    if !is_pd_spectrum(eig.values.as_slice()) {
        return Err(CmglError::NotPositiveDefinite {
            min_eigenvalue: eig.min_value(),
        });
    }
    let logdet = eig.values.iter().map(|v| v.ln()).sum();
    Ok((logdet, eig.map(|v| 1.0 / v)))
}
