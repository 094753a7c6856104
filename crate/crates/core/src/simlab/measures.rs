use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::link::BetaVector;
use crate::select::ModelSubset;
use crate::spectral::{sym_spectral_norm, symmetrize};

/// Estimation errors of one replication.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimationMeasures {
    /// `||β̂ - β0||²`.
    pub ee: f64,
    /// Spectral norm of `Σ(β̂) - Σ0`.
    pub se: f64,
    /// `p^{-1} ||Σ(β̂) - Σ0||_F²`.
    pub fe: f64,
}

/// Support recovery of one replication.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionMeasures {
    pub tpr: f64,
    pub fdr: f64,
    pub ct: f64,
}

pub fn estimation_measures(
    beta_hat: &BetaVector,
    truth: &BetaVector,
    sigma_hat: &DMatrix<f64>,
    sigma0: &DMatrix<f64>,
) -> EstimationMeasures {
    let ee = beta_hat
        .as_slice()
        .iter()
        .zip(truth.as_slice())
        .map(|(a, b)| (a - b).powi(2))
        .sum();
    let diff = symmetrize(&(sigma_hat - sigma0));
    EstimationMeasures {
        ee,
        se: sym_spectral_norm(&diff),
        fe: diff.norm_squared() / sigma0.nrows() as f64,
    }
}

/// Rates over weight-matrix indices only; the intercept is always present in both sets.
///
/// TPR is 1 when the true set has no weight matrices; FDR is 0 when the selection has none.
pub fn selection_measures(selected: &ModelSubset, truth: &ModelSubset) -> SelectionMeasures {
    let sel: Vec<usize> = selected.indices().iter().copied().filter(|&k| k != 0).collect();
    let tru: Vec<usize> = truth.indices().iter().copied().filter(|&k| k != 0).collect();
    let hits = sel.iter().filter(|k| tru.contains(k)).count() as f64;
    let false_pos = sel.len() as f64 - hits;
    SelectionMeasures {
        tpr: if tru.is_empty() { 1.0 } else { hits / tru.len() as f64 },
        fdr: if sel.is_empty() { 0.0 } else { false_pos / sel.len() as f64 },
        ct: if sel == tru { 1.0 } else { 0.0 },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;

    #[test]
    fn exact_estimate_has_zero_error() {
        let b = BetaVector::new(vec![0.3, 0.15, 0.0]).unwrap();
        let s = DMatrix::identity(3, 3);
        let m = estimation_measures(&b, &b, &s, &s);
        assert_eq!((m.ee, m.se, m.fe), (0.0, 0.0, 0.0));
        let t = ModelSubset::support(&b);
        let r = selection_measures(&t, &t);
        assert_eq!((r.tpr, r.fdr, r.ct), (1.0, 0.0, 1.0));
    }

    #[test]
    fn diagonal_spectral_error() {
        for p in [2usize, 5, 9] {
            let d = DVector::from_fn(p, |i, _| if i % 2 == 0 { 0.5 } else { -0.5 });
            let s0 = DMatrix::identity(p, p);
            let sh = &s0 + DMatrix::from_diagonal(&d);
            let b = BetaVector::new(vec![1.0]).unwrap();
            let m = estimation_measures(&b, &b, &sh, &s0);
            assert!((m.se - 0.5).abs() < 1e-14);
            assert!((m.fe - 0.25).abs() < 1e-14);
        }
    }

    #[test]
    fn rates() {
        let truth = ModelSubset::new(&[1, 2, 3], 6).unwrap();
        let sel = ModelSubset::new(&[1, 2, 5], 6).unwrap();
        let r = selection_measures(&sel, &truth);
        assert!((r.tpr - 2.0 / 3.0).abs() < 1e-15);
        assert!((r.fdr - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(r.ct, 0.0);
        let empty = selection_measures(&ModelSubset::intercept_only(), &truth);
        assert_eq!((empty.tpr, empty.fdr), (0.0, 0.0));
    }
}
