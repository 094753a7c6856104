mod common;

use cmgl::{
    asym_cov_ols, asym_cov_qmle, init_beta, ols_fit, qmle_fit, quasi_loglik, quasi_score, CmglError, FitOptions, Link,
    SampleSet, WeightMatrix, WeightSet,
};
use common::*;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;

const LINKS: [Link; 5] = [Link::Identity, Link::Exponential, Link::Square, Link::Inverse, Link::Sar];
const LN_2PI: f64 = 1.8378770664093453;

fn swap2() -> WeightSet {
    let w = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
    WeightSet::new(2, vec![WeightMatrix::from_dense(w).unwrap()]).unwrap()
}

fn mean_square(y: &DMatrix<f64>) -> f64 {
    y.iter().map(|v| v * v).sum::<f64>() / y.len() as f64
}

#[test]
fn loglik_examples() {
    let ws = WeightSet::identity_only(2).unwrap();
    let at = |y: &[f64]| quasi_loglik(&SampleSet::single(y).unwrap(), &ws, Link::Identity, &beta(&[1.0])).unwrap();
    assert!((at(&[0.0, 0.0]) + LN_2PI).abs() < 1e-12);
    assert!((at(&[1.0, 1.0]) + LN_2PI + 1.0).abs() < 1e-12);

    // Σ = [[2,1],[1,2]]: det 3, and Y'Σ⁻¹Y = 2 for Y = (1,-1).
    let l = quasi_loglik(&SampleSet::single(&[1.0, -1.0]).unwrap(), &swap2(), Link::Identity, &beta(&[2.0, 1.0])).unwrap();
    assert!((l - (-LN_2PI - 0.5 * 3f64.ln() - 1.0)).abs() < 1e-12);
    assert!((l + 3.387183).abs() < 1e-6);
}

#[test]
fn loglik_rejects_indefinite_covariance() {
    let y = SampleSet::single(&[1.0, -1.0]).unwrap();
    let r = quasi_loglik(&y, &swap2(), Link::Identity, &beta(&[1.0, 2.0]));
    assert!(matches!(r, Err(CmglError::NotPositiveDefinite { .. })));
}

#[test]
fn score_examples() {
    let mut g = rng(5);
    let y = normal_matrix(1, 7, &mut g);
    let ws = WeightSet::identity_only(7).unwrap();
    let b0 = y.norm_squared() / 7.0;
    let s = quasi_score(&sample(y), &ws, Link::Identity, &beta(&[b0])).unwrap();
    assert!(s[0].abs() < 1e-12);

    let p = 6;
    let ws = kernel_weights(p, 2, &mut g);
    let zero = SampleSet::single(&vec![0.0; p]).unwrap();
    let s = quasi_score(&zero, &ws, Link::Exponential, &beta(&[0.0, 0.0, 0.0])).unwrap();
    assert!((s[0] + p as f64 / 2.0).abs() < 1e-12);
    // -tr(W_k)/2 vanishes for zero-diagonal weights.
    assert!(s[1].abs() < 1e-12 && s[2].abs() < 1e-12);
}

#[test]
fn start_values() {
    let ws = WeightSet::identity_only(4).unwrap();
    let y = SampleSet::single(&[2.0, 0.0, 0.0, 0.0]).unwrap();
    assert_eq!(init_beta(&y, &ws, Link::Identity).unwrap().as_slice(), &[1.0]);
    assert_eq!(init_beta(&y, &ws, Link::Exponential).unwrap().as_slice(), &[0.0]);

    // Mean square 4: minimize ||YY' - b² I||_F over b by golden-section search.
    let v = [2.0, -2.0, 2.0, 2.0];
    let yy = DVector::from_row_slice(&v) * DVector::from_row_slice(&v).transpose();
    let obj = |b: f64| (&yy - DMatrix::identity(4, 4) * (b * b)).norm_squared();
    let (mut lo, mut hi) = (0.0f64, 10.0f64);
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..200 {
        let (a, c) = (hi - phi * (hi - lo), lo + phi * (hi - lo));
        if obj(a) < obj(c) {
            hi = c;
        } else {
            lo = a;
        }
    }
    let b = init_beta(&SampleSet::single(&v).unwrap(), &ws, Link::Square).unwrap()[0];
    assert!((b - 0.5 * (lo + hi)).abs() < 1e-6);
    assert_eq!(b, 2.0);

    let zero = SampleSet::single(&[0.0; 4]).unwrap();
    assert!(matches!(init_beta(&zero, &ws, Link::Identity), Err(CmglError::DegenerateSample(_))));
}

#[test]
fn ols_examples() {
    let fit = ols_fit(&SampleSet::single(&[1.0, 2.0]).unwrap(), &swap2(), &FitOptions::default()).unwrap();
    assert!((fit.beta[0] - 2.5).abs() < 1e-14 && (fit.beta[1] - 2.0).abs() < 1e-14);

    let mut g = rng(9);
    let y = normal_matrix(1, 30, &mut g);
    let fit = ols_fit(&sample(y.clone()), &WeightSet::identity_only(30).unwrap(), &FitOptions::default()).unwrap();
    assert!((fit.beta[0] - y.norm_squared() / 30.0).abs() < 1e-14);
}

#[test]
fn ols_rejects_collinear_weights() {
    let mut g = rng(2);
    let ws = kernel_weights(8, 1, &mut g);
    let w = ws.get(1).unwrap().clone();
    let twice = WeightSet::new(8, vec![w.clone(), w]).unwrap();
    let y = sample(normal_matrix(1, 8, &mut g));
    assert!(matches!(ols_fit(&y, &twice, &FitOptions::default()), Err(CmglError::SingularGram { .. })));
}

#[test]
fn ols_outer_factor_is_the_gram_matrix() {
    let mut g = rng(12);
    let p = 15;
    let ws = kernel_weights(p, 3, &mut g);
    let y = sample(normal_matrix(2, p, &mut g));
    let fit = ols_fit(&y, &ws, &FitOptions::default()).unwrap();
    let cov = asym_cov_ols(&fit, &y, &ws).unwrap();
    for k in 0..4 {
        for l in 0..4 {
            let mk = if k == 0 { DMatrix::identity(p, p) } else { ws.dense(k) };
            let ml = if l == 0 { DMatrix::identity(p, p) } else { ws.dense(l) };
            let t = (mk * ml).trace();
            assert!((cov.bread[(k, l)] * p as f64 - t).abs() < 1e-12 * (1.0 + t.abs()));
        }
    }
}

#[test]
fn scalar_covariance_reductions() {
    let p = 40;
    let mut g = rng(21);
    let ws = WeightSet::identity_only(p).unwrap();
    let y = normal_matrix(1, p, &mut g) * 1.7;

    let fit = qmle_fit(&sample(y.clone()), &ws, Link::Identity, &FitOptions::default()).unwrap();
    let b0 = fit.beta[0];
    let mu4 = y.iter().map(|v| v.powi(4)).sum::<f64>() / p as f64 / (b0 * b0);
    assert!((fit.mu4_hat.unwrap() - mu4).abs() < 1e-9);
    let expected = b0 * b0 * (2.0 + mu4 - 3.0) / p as f64;
    assert!((fit.vcov[0][0] - expected).abs() < 1e-10 * expected);

    // Unit mean square so that the fitted covariance is the identity.
    let unit = &y / mean_square(&y).sqrt();
    let fit = ols_fit(&sample(unit.clone()), &ws, &FitOptions::default()).unwrap();
    assert!((fit.beta[0] - 1.0).abs() < 1e-12);
    let mu4 = unit.iter().map(|v| v.powi(4)).sum::<f64>() / p as f64;
    let expected = (2.0 + mu4 - 3.0) / p as f64;
    assert!((fit.vcov[0][0] - expected).abs() < 1e-9 * expected);
}

#[test]
fn gaussian_fourth_moment() {
    let p = 2000;
    let mut g = rng(33);
    let ws = WeightSet::identity_only(p).unwrap();
    let y = sample(normal_matrix(1, p, &mut g) * 0.8);
    let fit = qmle_fit(&y, &ws, Link::Exponential, &FitOptions::default()).unwrap();
    let mu4 = fit.mu4_hat.unwrap();
    assert!((mu4 - 3.0).abs() < 0.3, "mu4 {mu4}");
    let cov = asym_cov_qmle(&fit, &y, &ws).unwrap();
    let gaussian = 2.0 / (p as f64 * cov.bread[(0, 0)]);
    assert!((cov.vcov[(0, 0)] - gaussian).abs() < 0.1 * gaussian);
}

#[test]
fn sd_is_root_of_vcov_diagonal() {
    let mut g = rng(4);
    let p = 25;
    let ws = kernel_weights(p, 2, &mut g);
    let truth = feasible_beta(Link::Exponential, &ws, &mut g);
    let y = gaussian_sample(&dense_sigma(Link::Exponential, &dense_b(&ws, &truth)), 3, &mut g);
    let fit = qmle_fit(&sample(y), &ws, Link::Exponential, &FitOptions::default()).unwrap();
    assert!(fit.converged);
    let v = fit.vcov_matrix().unwrap();
    assert!((&v - v.transpose()).amax() < 1e-15);
    assert!(v.clone().symmetric_eigenvalues().min() > -1e-12 * v.amax());
    for k in 0..3 {
        assert!((fit.sd[k] - v[(k, k)].sqrt()).abs() < 1e-15);
    }
}

fn link_strategy() -> impl Strategy<Value = Link> {
    prop::sample::select(LINKS.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn score_matches_central_differences(link in link_strategy(), p in 5usize..=20, k in 1usize..=3, seed in any::<u64>()) {
        let mut g = rng(seed);
        let ws = kernel_weights(p, k, &mut g);
        let b = feasible_beta(link, &ws, &mut g);
        let y = normal_matrix(2, p, &mut g);
        let s = quasi_score(&sample(y.clone()), &ws, link, &beta(&b)).unwrap();
        let h = 1e-6;
        let mut fd = DVector::zeros(k + 1);
        for j in 0..=k {
            let (mut up, mut dn) = (b.clone(), b.clone());
            up[j] += h;
            dn[j] -= h;
            fd[j] = (oracle_at(link, &y, &ws, &up).unwrap() - oracle_at(link, &y, &ws, &dn).unwrap()) / (2.0 * h);
        }
        let rel = (&s - &fd).norm() / fd.norm().max(1.0);
        prop_assert!(rel < 1e-5, "{link:?} rel {rel}");
    }

    #[test]
    fn accepted_iterates_never_decrease(link in prop::sample::select(vec![Link::Identity, Link::Exponential]), seed in any::<u64>()) {
        let mut g = rng(seed);
        let p = 30;
        let ws = kernel_weights(p, 2, &mut g);
        let truth = feasible_beta(link, &ws, &mut g);
        let y = gaussian_sample(&dense_sigma(link, &dense_b(&ws, &truth)), 4, &mut g);
        let fit = qmle_fit(&sample(y), &ws, link, &FitOptions::default().without_inference()).unwrap();
        prop_assert!(fit.history.windows(2).all(|w| w[1] >= w[0]));
        prop_assert_eq!(fit.history.last().copied(), fit.loglik);
    }

    #[test]
    fn ols_is_a_least_squares_minimum(seed in any::<u64>(), n in 1usize..4) {
        let mut g = rng(seed);
        let p = 12;
        let ws = kernel_weights(p, 2, &mut g);
        let y = normal_matrix(n, p, &mut g);
        let fit = ols_fit(&sample(y.clone()), &ws, &FitOptions::default().without_inference()).unwrap();
        let s = y.transpose() * &y / n as f64;
        let obj = |b: &[f64]| (&s - dense_b(&ws, b)).norm_squared();
        let at = obj(fit.beta.as_slice());
        for _ in 0..20 {
            let d = DVector::from_fn(3, |_, _| g.random_range(-1.0..1.0));
            let d = d.normalize() * 1e-3;
            let moved: Vec<f64> = fit.beta.as_slice().iter().zip(d.iter()).map(|(a, b)| a + b).collect();
            prop_assert!(obj(&moved) >= at);
        }
    }

    #[test]
    fn qmle_and_ols_agree_without_weights(seed in any::<u64>(), p in 2usize..50, n in 1usize..4) {
        let mut g = rng(seed);
        let y = sample(normal_matrix(n, p, &mut g));
        let ws = WeightSet::identity_only(p).unwrap();
        let q = qmle_fit(&y, &ws, Link::Identity, &FitOptions::default()).unwrap();
        let o = ols_fit(&y, &ws, &FitOptions::default()).unwrap();
        prop_assert!(q.converged);
        prop_assert!((q.beta[0] - o.beta[0]).abs() < 1e-10);
        prop_assert!((q.beta[0] - y.mean_square()).abs() < 1e-10);
    }
}
