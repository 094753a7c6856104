mod common;

use cmgl::link::{dsigma_dense, logdet_and_inverse};
use cmgl::{assemble_b, dsigma, sigma, CovMatrix, Link, WeightMatrix, WeightSet};
use common::{beta, dense_sigma, feasible_beta, kernel_weights, rng};
use nalgebra::DMatrix;
use proptest::prelude::*;

const LINKS: [Link; 5] = [Link::Identity, Link::Exponential, Link::Square, Link::Inverse, Link::Sar];

fn swap2() -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0])
}

#[test]
fn assembly_examples() {
    let ws = WeightSet::new(2, vec![WeightMatrix::from_dense(swap2()).unwrap()]).unwrap();
    assert_eq!(assemble_b(&ws, &beta(&[1.0, 0.0])).unwrap(), DMatrix::identity(2, 2));
    assert_eq!(assemble_b(&ws, &beta(&[0.0, 0.0])).unwrap(), DMatrix::zeros(2, 2));
    assert_eq!(
        assemble_b(&ws, &beta(&[2.0, 0.5])).unwrap(),
        DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 2.0])
    );
    assert!(assemble_b(&ws, &beta(&[1.0])).is_err());
}

#[test]
fn sigma_examples() {
    let s = sigma(Link::Exponential, &DMatrix::from_diagonal_element(2, 2, 0.3)).unwrap();
    assert!((s.matrix() - DMatrix::from_diagonal_element(2, 2, 1.349859)).amax() < 1e-6);

    let b = DMatrix::from_row_slice(2, 2, &[1.0, -3.0, -3.0, 0.5]);
    assert_eq!(sigma(Link::Identity, &b).unwrap().matrix(), &b);

    let s = sigma(Link::Sar, &DMatrix::from_diagonal_element(3, 3, 2.0)).unwrap();
    assert!((s.matrix() - DMatrix::from_diagonal_element(3, 3, 0.25)).amax() < 1e-15);

    for link in [Link::Inverse, Link::Sar] {
        assert!(matches!(
            sigma(link, &DMatrix::zeros(3, 3)),
            Err(cmgl::CmglError::SingularB { .. })
        ));
    }
}

#[test]
fn derivative_examples() {
    let w = WeightMatrix::from_dense(swap2()).unwrap();
    let b = DMatrix::from_row_slice(2, 2, &[0.7, 0.2, 0.2, -1.0]);
    assert_eq!(dsigma(Link::Identity, &b, &w).unwrap(), swap2());
    assert!((dsigma(Link::Exponential, &DMatrix::zeros(2, 2), &w).unwrap() - swap2()).amax() < 1e-14);

    let b = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 2.0]));
    let d = dsigma(Link::Exponential, &b, &w).unwrap();
    let h = 1e-6;
    let fd = (dense_sigma(Link::Exponential, &(&b + swap2() * h)) - dense_sigma(Link::Exponential, &(&b - swap2() * h)))
        / (2.0 * h);
    assert!((d[(0, 1)] - fd[(0, 1)]).abs() < 1e-6);
    assert!((d[(0, 1)] - 4.670774).abs() < 1e-6);
    assert!(d[(0, 0)].abs() < 1e-14 && d[(1, 1)].abs() < 1e-14);
}

#[test]
fn logdet_examples() {
    let (ld, inv) = logdet_and_inverse(&CovMatrix::new(DMatrix::identity(4, 4)).unwrap()).unwrap();
    assert!(ld.abs() < 1e-15);
    assert!((inv - DMatrix::identity(4, 4)).amax() < 1e-15);

    let (ld, inv) = logdet_and_inverse(&CovMatrix::new(DMatrix::from_diagonal_element(2, 2, 2.0)).unwrap()).unwrap();
    assert!((ld - 1.386294).abs() < 1e-6);
    assert!((inv - DMatrix::from_diagonal_element(2, 2, 0.5)).amax() < 1e-15);

    let bad = CovMatrix::new(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0])).unwrap();
    assert!(matches!(logdet_and_inverse(&bad), Err(cmgl::CmglError::NotPositiveDefinite { .. })));
}

/// Real roots of `x^3 + a x^2 + b x + c` with three real roots (trigonometric form).
fn cubic_roots(a: f64, b: f64, c: f64) -> [f64; 3] {
    let q = (a * a - 3.0 * b) / 9.0;
    let r = (2.0 * a.powi(3) - 9.0 * a * b + 27.0 * c) / 54.0;
    let theta = (r / q.powi(3).sqrt()).clamp(-1.0, 1.0).acos();
    let m = -2.0 * q.sqrt();
    let tau = 2.0 * std::f64::consts::PI;
    [
        m * (theta / 3.0).cos() - a / 3.0,
        m * ((theta + tau) / 3.0).cos() - a / 3.0,
        m * ((theta - tau) / 3.0).cos() - a / 3.0,
    ]
}

#[test]
fn logdet_matches_characteristic_polynomial() {
    let mut g = rng(41);
    for _ in 0..20 {
        let x = common::normal_matrix(3, 3, &mut g);
        let s = &x * x.transpose() + DMatrix::identity(3, 3) * 0.1;
        let tr = s.trace();
        let minors = s[(0, 0)] * s[(1, 1)] - s[(0, 1)].powi(2) + s[(0, 0)] * s[(2, 2)] - s[(0, 2)].powi(2)
            + s[(1, 1)] * s[(2, 2)]
            - s[(1, 2)].powi(2);
        let det = s[(0, 0)] * (s[(1, 1)] * s[(2, 2)] - s[(1, 2)].powi(2))
            - s[(0, 1)] * (s[(0, 1)] * s[(2, 2)] - s[(1, 2)] * s[(0, 2)])
            + s[(0, 2)] * (s[(0, 1)] * s[(1, 2)] - s[(1, 1)] * s[(0, 2)]);
        let roots = cubic_roots(-tr, minors, -det);
        let oracle: f64 = roots.iter().map(|l| l.ln()).sum();
        let (ld, _) = logdet_and_inverse(&CovMatrix::new(s).unwrap()).unwrap();
        assert!((ld - oracle).abs() < 1e-9 * (1.0 + oracle.abs()), "{ld} vs {oracle}");
    }
}

fn link_strategy() -> impl Strategy<Value = Link> {
    prop::sample::select(LINKS.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn sigma_is_symmetric(link in link_strategy(), p in 2usize..20, k in 1usize..4, seed in any::<u64>()) {
        let mut g = rng(seed);
        let ws = kernel_weights(p, k, &mut g);
        let b = assemble_b(&ws, &beta(&feasible_beta(link, &ws, &mut g))).unwrap();
        let s = sigma(link, &b).unwrap();
        let m = s.matrix();
        prop_assert!((m - m.transpose()).amax() < 1e-10);
    }

    #[test]
    fn derivative_matches_central_differences(link in link_strategy(), p in 2usize..20, k in 1usize..4, seed in any::<u64>()) {
        let mut g = rng(seed);
        let ws = kernel_weights(p, k, &mut g);
        let b = assemble_b(&ws, &beta(&feasible_beta(link, &ws, &mut g))).unwrap();
        let h = 1e-6;
        for j in 1..=k {
            let w = ws.dense(j);
            let analytic = dsigma_dense(link, &b, &w).unwrap();
            let fd = (sigma(link, &(&b + &w * h)).unwrap().into_matrix() - sigma(link, &(&b - &w * h)).unwrap().into_matrix())
                / (2.0 * h);
            let rel = (&analytic - &fd).norm() / analytic.norm().max(1e-300);
            prop_assert!(rel < 1e-5, "{link:?} rel {rel}");
        }
    }

    #[test]
    fn exponential_is_positive_definite(p in 2usize..15, seed in any::<u64>(), spread in 0.1f64..5.0) {
        let mut g = rng(seed);
        let x = common::normal_matrix(p, p, &mut g) * spread;
        let b = (&x + x.transpose()) * 0.5;
        let s = sigma(Link::Exponential, &b).unwrap();
        prop_assert!(s.min_eigenvalue() > 0.0);
    }

    #[test]
    fn sar_of_scaled_identity(p in 2usize..12, c in prop_oneof![0.1f64..10.0, -10.0f64..-0.1]) {
        let s = sigma(Link::Sar, &DMatrix::from_diagonal_element(p, p, c)).unwrap();
        let expected = DMatrix::from_diagonal_element(p, p, 1.0 / (c * c));
        prop_assert!((s.matrix() - expected).amax() <= 4.0 * f64::EPSILON / (c * c));
    }
}
