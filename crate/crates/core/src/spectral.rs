//! Symmetric eigendecomposition and spectral matrix functions.

use nalgebra::{DMatrix, DVector};

/// `A = U diag(values) U'` for a symmetric `A`.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

impl SymEigen {
    /// Decomposes the symmetric part of `a`.
    pub fn new(a: &DMatrix<f64>) -> Self {
        let eig = symmetrize(a).symmetric_eigen();
        Self {
            values: eig.eigenvalues,
            vectors: eig.eigenvectors,
        }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn min_value(&self) -> f64 {
        self.values.min()
    }

    pub fn max_value(&self) -> f64 {
        self.values.max()
    }

    /// `U diag(f(values)) U'`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let scaled = self.values.map(f);
        self.reconstruct(&scaled)
    }

    /// `U diag(d) U'`.
    pub fn reconstruct(&self, d: &DVector<f64>) -> DMatrix<f64> {
        let mut ud = self.vectors.clone();
        for (mut col, &s) in ud.column_iter_mut().zip(d.iter()) {
            col *= s;
        }
        symmetrize(&(ud * self.vectors.transpose()))
    }

    /// Symmetric PSD square root; negative eigenvalues are clamped to zero.
    pub fn sqrt(&self) -> DMatrix<f64> {
        self.map(|v| v.max(0.0).sqrt())
    }
}

/// `(M + M') / 2`.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Largest absolute asymmetry `max |M_ij - M_ji|`.
pub fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    (m - m.transpose()).amax()
}

/// Spectral norm of a symmetric matrix: largest eigenvalue magnitude.
pub fn sym_spectral_norm(m: &DMatrix<f64>) -> f64 {
    SymEigen::new(m).values.amax()
}

/// Reciprocal condition number of a small symmetric matrix (eigenvalue ratio).
pub(crate) fn sym_rcond(m: &DMatrix<f64>) -> f64 {
    let eig = SymEigen::new(m);
    let max = eig.values.amax();
    if max == 0.0 {
        return 0.0;
    }
    eig.values.min().max(0.0) / max
}

/// Inverse of a small symmetric positive definite matrix via its eigenpairs.
pub(crate) fn sym_inverse(m: &DMatrix<f64>) -> DMatrix<f64> {
    SymEigen::new(m).map(|v| 1.0 / v)
}
