//! Weight matrices built from entity covariates.
//!
//! Every matrix produced here is symmetric with an exactly zero diagonal.
//! Matrices are stored dense; the nonzero upper-triangle entries are kept
//! alongside so products with sparse designs stay cheap.

use std::collections::HashMap;
use std::hash::Hash;

use nalgebra::DMatrix;

use crate::error::{CmglError, Result};

/// Above this density the dense product path beats the pair list.
const DENSE_PRODUCT_DENSITY: f64 = 0.25;

#[derive(Debug, Clone, PartialEq)]
pub enum CovariateValues {
    Continuous(Vec<f64>),
    /// Group codes; equal codes mean "same group".
    Discrete(Vec<usize>),
}

/// One covariate observed on each of the `p` entities.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariateColumn {
    pub name: String,
    pub values: CovariateValues,
}

impl CovariateColumn {
    pub fn continuous(name: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(CmglError::input("a covariate needs at least two entities"));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(CmglError::input(format!(
                "covariate value at row {i} is not finite"
            )));
        }
        Ok(Self {
            name: name.into(),
            values: CovariateValues::Continuous(values),
        })
    }

    /// Encodes arbitrary labels into group codes in order of first appearance.
    pub fn discrete<L: Hash + Eq + Clone>(name: impl Into<String>, labels: &[L]) -> Result<Self> {
        if labels.len() < 2 {
            return Err(CmglError::input("a covariate needs at least two entities"));
        }
        let mut codes = HashMap::new();
        let values = labels
            .iter()
            .map(|l| {
                let next = codes.len();
                *codes.entry(l.clone()).or_insert(next)
            })
            .collect();
        Ok(Self {
            name: name.into(),
            values: CovariateValues::Discrete(values),
        })
    }

    pub fn len(&self) -> usize {
        match &self.values {
            CovariateValues::Continuous(v) => v.len(),
            CovariateValues::Discrete(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Symmetric, zero-diagonal `p x p` weight matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    dense: DMatrix<f64>,
    /// Nonzero strict-upper-triangle entries `(i, j, w)` with `i < j`.
    pairs: Vec<(usize, usize, f64)>,
}

impl WeightMatrix {
    /// Validates exact symmetry and a zero diagonal.
    pub fn from_dense(dense: DMatrix<f64>) -> Result<Self> {
        let p = dense.nrows();
        if dense.ncols() != p {
            return Err(CmglError::DimensionMismatch {
                expected: p,
                actual: dense.ncols(),
            });
        }
        if p < 2 {
            return Err(CmglError::input("weight matrices need dimension p >= 2"));
        }
        let mut pairs = Vec::new();
        for j in 0..p {
            if dense[(j, j)] != 0.0 {
                return Err(CmglError::input(format!(
                    "weight matrix diagonal entry ({j},{j}) is nonzero"
                )));
            }
            for i in 0..j {
                let w = dense[(i, j)];
                if !w.is_finite() {
                    return Err(CmglError::input("weight matrix has non-finite entries"));
                }
                if w != dense[(j, i)] {
                    return Err(CmglError::input(format!(
                        "weight matrix is not symmetric at ({i},{j})"
                    )));
                }
                if w != 0.0 {
                    pairs.push((i, j, w));
                }
            }
        }
        pairs.sort_unstable_by_key(|&(i, j, _)| (i, j));
        Ok(Self { dense, pairs })
    }

    fn from_pairs(p: usize, mut pairs: Vec<(usize, usize, f64)>) -> Self {
        pairs.retain(|&(_, _, w)| w != 0.0);
        pairs.sort_unstable_by_key(|&(i, j, _)| (i, j));
        let mut dense = DMatrix::zeros(p, p);
        for &(i, j, w) in &pairs {
            dense[(i, j)] = w;
            dense[(j, i)] = w;
        }
        Self { dense, pairs }
    }

    pub fn dim(&self) -> usize {
        self.dense.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.dense
    }

    pub fn pairs(&self) -> &[(usize, usize, f64)] {
        &self.pairs
    }

    /// Fraction of nonzero off-diagonal entries.
    pub fn density(&self) -> f64 {
        let p = self.dim() as f64;
        2.0 * self.pairs.len() as f64 / (p * (p - 1.0))
    }

    /// `W * U`.
    pub(crate) fn mul_dense(&self, u: &DMatrix<f64>) -> DMatrix<f64> {
        if self.density() > DENSE_PRODUCT_DENSITY {
            return &self.dense * u;
        }
        let mut out = DMatrix::zeros(self.dim(), u.ncols());
        for c in 0..u.ncols() {
            let src = u.column(c);
            let mut dst = out.column_mut(c);
            for &(i, j, w) in &self.pairs {
                dst[i] += w * src[j];
                dst[j] += w * src[i];
            }
        }
        out
    }

    /// Frobenius inner product `<W, H>` for an arbitrary square `H`.
    pub(crate) fn frobenius_dot(&self, h: &DMatrix<f64>) -> f64 {
        self.pairs
            .iter()
            .map(|&(i, j, w)| w * (h[(i, j)] + h[(j, i)]))
            .sum()
    }
}

/// Density of a weight matrix: nonzero off-diagonal entries over `p(p-1)`.
pub fn density(w: &WeightMatrix) -> f64 {
    w.density()
}

/// Gaussian-kernel weights `exp{-scale (x_i - x_j)^2}`.
pub fn build_continuous(x: &CovariateColumn, scale: f64) -> Result<WeightMatrix> {
    let values = match &x.values {
        CovariateValues::Continuous(v) => v,
        CovariateValues::Discrete(_) => {
            return Err(CmglError::input(format!(
                "covariate {} is discrete; continuous kernel requested",
                x.name
            )))
        }
    };
    check_scale(scale)?;
    if values.iter().any(|v| !v.is_finite()) {
        return Err(CmglError::input(format!(
            "covariate {} has non-finite values",
            x.name
        )));
    }
    let p = values.len();
    let mut pairs = Vec::with_capacity(p * (p - 1) / 2);
    for i in 0..p {
        for j in i + 1..p {
            let d = values[i] - values[j];
            pairs.push((i, j, (-scale * d * d).exp()));
        }
    }
    Ok(WeightMatrix::from_pairs(p, pairs))
}

/// Same-group indicator weights.
pub fn build_discrete(x: &CovariateColumn) -> Result<WeightMatrix> {
    let codes = match &x.values {
        CovariateValues::Discrete(v) => v,
        CovariateValues::Continuous(_) => {
            return Err(CmglError::input(format!(
                "covariate {} is continuous; group indicator requested",
                x.name
            )))
        }
    };
    let p = codes.len();
    let mut pairs = Vec::new();
    for i in 0..p {
        for j in i + 1..p {
            if codes[i] == codes[j] {
                pairs.push((i, j, 1.0));
            }
        }
    }
    Ok(WeightMatrix::from_pairs(p, pairs))
}

/// Number of pairs kept for a density target over `m` pairs: the nearest
/// integer to `target * m`, with exact halves rounded down.
pub(crate) fn pair_budget(target_density: f64, m: usize) -> usize {
    let raw = target_density * m as f64;
    let kept = (raw - 0.5 - 1e-9).ceil().max(0.0) as usize;
    kept.min(m)
}

/// Thresholded kernel: `exp{-scale dist^2}` on the pairs with the smallest
/// distances, zero elsewhere, such that the density matches `target_density`.
///
/// Pairs are ranked by distance; ties at the cut are taken in lexicographic
/// `(i, j)` order until the pair budget is spent.
pub fn build_thresholded(
    dist: &DMatrix<f64>,
    target_density: f64,
    scale: f64,
) -> Result<WeightMatrix> {
    if !(target_density > 0.0 && target_density < 1.0) {
        return Err(CmglError::input(format!(
            "target density must lie in (0, 1), got {target_density}"
        )));
    }
    check_scale(scale)?;
    let p = dist.nrows();
    if dist.ncols() != p {
        return Err(CmglError::DimensionMismatch {
            expected: p,
            actual: dist.ncols(),
        });
    }
    if p < 2 {
        return Err(CmglError::input("distance matrix needs p >= 2"));
    }
    let mut ranked = Vec::with_capacity(p * (p - 1) / 2);
    for i in 0..p {
        if dist[(i, i)] != 0.0 {
            return Err(CmglError::input("distance matrix must have a zero diagonal"));
        }
        for j in i + 1..p {
            let d = dist[(i, j)];
            if !d.is_finite() || d < 0.0 || d != dist[(j, i)] {
                return Err(CmglError::input(format!(
                    "distance matrix must be finite, nonnegative and symmetric; bad pair ({i},{j})"
                )));
            }
            ranked.push((d, i, j));
        }
    }
    let budget = pair_budget(target_density, ranked.len());
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then((a.1, a.2).cmp(&(b.1, b.2))));
    let pairs = ranked
        .into_iter()
        .take(budget)
        .map(|(d, i, j)| (i, j, (-scale * d * d).exp()))
        .collect();
    Ok(WeightMatrix::from_pairs(p, pairs))
}

/// Absolute pairwise distances `|x_i - x_j|` of a continuous covariate.
pub fn covariate_distances(x: &CovariateColumn) -> Result<DMatrix<f64>> {
    match &x.values {
        CovariateValues::Continuous(v) => {
            let p = v.len();
            Ok(DMatrix::from_fn(p, p, |i, j| (v[i] - v[j]).abs()))
        }
        CovariateValues::Discrete(_) => Err(CmglError::input(format!(
            "covariate {} is discrete; distances need a continuous covariate",
            x.name
        ))),
    }
}

fn check_scale(scale: f64) -> Result<()> {
    if scale > 0.0 && scale.is_finite() {
        Ok(())
    } else {
        Err(CmglError::input(format!(
            "kernel scale must be positive, got {scale}"
        )))
    }
}

/// The design `(W_0 = I, W_1, ..., W_K)`. Index 0 is implicit.
#[derive(Debug, Clone)]
pub struct WeightSet {
    p: usize,
    matrices: Vec<WeightMatrix>,
    names: Vec<String>,
}

impl WeightSet {
    pub fn new(p: usize, matrices: Vec<WeightMatrix>) -> Result<Self> {
        let names = (1..=matrices.len()).map(|k| format!("W{k}")).collect();
        Self::with_names(p, matrices, names)
    }

    pub fn with_names(p: usize, matrices: Vec<WeightMatrix>, names: Vec<String>) -> Result<Self> {
        if p < 2 {
            return Err(CmglError::input("weight sets need dimension p >= 2"));
        }
        if names.len() != matrices.len() {
            return Err(CmglError::DimensionMismatch {
                expected: matrices.len(),
                actual: names.len(),
            });
        }
        if let Some(w) = matrices.iter().find(|w| w.dim() != p) {
            return Err(CmglError::DimensionMismatch {
                expected: p,
                actual: w.dim(),
            });
        }
        Ok(Self { p, matrices, names })
    }

    /// Intercept-only design.
    pub fn identity_only(p: usize) -> Result<Self> {
        Self::new(p, Vec::new())
    }

    pub fn dim(&self) -> usize {
        self.p
    }

    /// Number of non-identity matrices `K`.
    pub fn k(&self) -> usize {
        self.matrices.len()
    }

    /// Number of coefficients, `K + 1`.
    pub fn n_coef(&self) -> usize {
        self.matrices.len() + 1
    }

    /// `W_k` for `k >= 1`; `None` for the implicit identity or out of range.
    pub fn get(&self, k: usize) -> Option<&WeightMatrix> {
        k.checked_sub(1).and_then(|i| self.matrices.get(i))
    }

    pub fn matrices(&self) -> &[WeightMatrix] {
        &self.matrices
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Dense `W_k`, with `k = 0` the identity.
    pub fn dense(&self, k: usize) -> DMatrix<f64> {
        match self.get(k) {
            Some(w) => w.as_matrix().clone(),
            None => DMatrix::identity(self.p, self.p),
        }
    }

    /// `W_k * U`.
    pub(crate) fn mul_dense(&self, k: usize, u: &DMatrix<f64>) -> DMatrix<f64> {
        match self.get(k) {
            Some(w) => w.mul_dense(u),
            None => u.clone(),
        }
    }

    /// `<W_k, H>`.
    pub(crate) fn frobenius_dot(&self, k: usize, h: &DMatrix<f64>) -> f64 {
        match self.get(k) {
            Some(w) => w.frobenius_dot(h),
            None => h.trace(),
        }
    }

    /// `tr(W_k W_l)`.
    pub(crate) fn trace_product(&self, k: usize, l: usize) -> f64 {
        match (self.get(k), self.get(l)) {
            (None, None) => self.p as f64,
            (Some(_), None) | (None, Some(_)) => 0.0,
            (Some(a), Some(b)) => a.as_matrix().dot(b.as_matrix()),
        }
    }
}
