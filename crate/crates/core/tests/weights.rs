use cmgl::{build_continuous, build_discrete, build_thresholded, covariate_distances, density, CovariateColumn, WeightMatrix};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn continuous(x: &[f64]) -> CovariateColumn {
    CovariateColumn::continuous("x", x.to_vec()).unwrap()
}

fn assert_structure(w: &WeightMatrix) {
    let m = w.as_matrix();
    let p = m.nrows();
    for i in 0..p {
        assert_eq!(m[(i, i)], 0.0);
        for j in 0..p {
            assert_eq!(m[(i, j)], m[(j, i)]);
        }
    }
}

#[test]
fn kernel_examples() {
    let w = build_continuous(&continuous(&[0.0, 1.0]), 1.0).unwrap();
    assert!((w.as_matrix()[(0, 1)] - (-1.0f64).exp()).abs() < 1e-15);

    let w = build_continuous(&continuous(&[3.5; 4]), 1.0).unwrap();
    let m = w.as_matrix();
    for i in 0..4 {
        for j in 0..4 {
            assert_eq!(m[(i, j)], if i == j { 0.0 } else { 1.0 });
        }
    }

    let w = build_continuous(&continuous(&[0.0, 1.0, 2.0]), 1.0).unwrap();
    let m = w.as_matrix();
    assert!((m[(0, 1)] - 0.367879).abs() < 1e-6);
    assert!((m[(1, 2)] - 0.367879).abs() < 1e-6);
    assert!((m[(0, 2)] - 0.018316).abs() < 1e-6);
}

#[test]
fn kernel_rejects_non_finite_values() {
    assert!(CovariateColumn::continuous("x", vec![0.0, f64::NAN]).is_err());
    assert!(build_continuous(&continuous(&[0.0, 1.0]), -1.0).is_err());
}

#[test]
fn group_examples() {
    let w = build_discrete(&CovariateColumn::discrete("g", &["a", "a", "b"]).unwrap()).unwrap();
    let m = w.as_matrix();
    assert_eq!((m[(0, 1)], m[(0, 2)], m[(1, 2)]), (1.0, 0.0, 0.0));

    let w = build_discrete(&CovariateColumn::discrete("g", &[1, 2, 3, 4]).unwrap()).unwrap();
    assert_eq!(w.as_matrix().amax(), 0.0);
    assert_eq!(density(&w), 0.0);

    let w = build_discrete(&CovariateColumn::discrete("g", &[7, 7, 7]).unwrap()).unwrap();
    assert_eq!(density(&w), 1.0);
    assert_structure(&w);
}

#[test]
fn density_counts_pairs() {
    let mut m = DMatrix::zeros(3, 3);
    assert_eq!(density(&WeightMatrix::from_dense(m.clone()).unwrap()), 0.0);
    m[(0, 2)] = 0.5;
    m[(2, 0)] = 0.5;
    assert!((density(&WeightMatrix::from_dense(m).unwrap()) - 1.0 / 3.0).abs() < 1e-15);
}

#[test]
fn from_dense_rejects_bad_structure() {
    let mut m = DMatrix::zeros(3, 3);
    m[(0, 1)] = 1.0;
    assert!(WeightMatrix::from_dense(m.clone()).is_err());
    m[(1, 0)] = 1.0;
    m[(2, 2)] = 1.0;
    assert!(WeightMatrix::from_dense(m).is_err());
}

/// Distances of five points whose ten pairwise gaps are all different.
fn distinct_distances() -> DMatrix<f64> {
    covariate_distances(&continuous(&[0.0, 1.0, 3.0, 7.0, 15.0])).unwrap()
}

#[test]
fn threshold_keeps_smallest_pairs() {
    let d = distinct_distances();
    let w = build_thresholded(&d, 0.2, 1.0).unwrap();
    // Sorting the ten gaps by hand: 1 (0,1) and 2 (1,2) are the two smallest.
    let kept: Vec<(usize, usize)> = w.pairs().iter().map(|&(i, j, _)| (i, j)).collect();
    assert_eq!(kept, vec![(0, 1), (1, 2)]);
    assert!((w.pairs()[1].2 - (-4.0f64).exp()).abs() < 1e-15);
    assert!((density(&w) - 0.2).abs() < 1e-15);
}

#[test]
fn threshold_near_one_keeps_everything() {
    let w = build_thresholded(&distinct_distances(), 0.999, 1.0).unwrap();
    assert_eq!(w.pairs().len(), 10);
}

#[test]
fn threshold_ties_follow_lexicographic_order() {
    let p = 5;
    let d = DMatrix::from_fn(p, p, |i, j| if i == j { 0.0 } else { 0.3 });
    let w = build_thresholded(&d, 0.5, 1.0).unwrap();
    let mut expected = Vec::new();
    for i in 0..p {
        for j in i + 1..p {
            expected.push((i, j));
        }
    }
    expected.truncate(5);
    let kept: Vec<(usize, usize)> = w.pairs().iter().map(|&(i, j, _)| (i, j)).collect();
    assert_eq!(kept, expected);
}

#[test]
fn threshold_rejects_bad_targets() {
    let d = distinct_distances();
    for t in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
        assert!(build_thresholded(&d, t, 1.0).is_err(), "target {t}");
    }
}

proptest! {
    #[test]
    fn kernel_is_symmetric_with_zero_diagonal(x in prop::collection::vec(-5.0f64..5.0, 2..30), scale in 0.1f64..20.0) {
        let w = build_continuous(&continuous(&x), scale).unwrap();
        assert_structure(&w);
        prop_assert!(w.as_matrix().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn kernel_is_translation_invariant(x in prop::collection::vec(-5.0f64..5.0, 2..20), shift in -100.0f64..100.0) {
        // Shifts by a dyadic rational keep differences exact.
        let shift = (shift * 64.0).round() / 64.0;
        let moved: Vec<f64> = x.iter().map(|v| v + shift).collect();
        let a = build_continuous(&continuous(&x), 1.0).unwrap();
        let b = build_continuous(&continuous(&moved), 1.0).unwrap();
        let gap = (a.as_matrix() - b.as_matrix()).amax();
        prop_assert!(gap < 1e-12, "gap {}", gap);
    }

    #[test]
    fn groups_are_symmetric(labels in prop::collection::vec(0u8..4, 2..25)) {
        let w = build_discrete(&CovariateColumn::discrete("g", &labels).unwrap()).unwrap();
        assert_structure(&w);
    }

    #[test]
    fn threshold_density_tracks_target(x in prop::collection::vec(0.0f64..1.0, 3..40), target in 0.01f64..0.99) {
        let d = covariate_distances(&continuous(&x)).unwrap();
        let mut gaps: Vec<f64> = Vec::new();
        for i in 0..x.len() {
            for j in i + 1..x.len() {
                gaps.push(d[(i, j)]);
            }
        }
        gaps.sort_by(f64::total_cmp);
        prop_assume!(gaps.windows(2).all(|w| w[0] < w[1]));
        let w = build_thresholded(&d, target, 1.0).unwrap();
        assert_structure(&w);
        let p = x.len() as f64;
        prop_assert!((density(&w) - target).abs() <= 1.0 / (p * (p - 1.0)) + 1e-12);
    }
}
