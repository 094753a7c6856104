mod common;

use cmgl::lrtest::{lr_statistic, upper_quantile};
use cmgl::simlab::{gen_weights_scenario, true_covariance, Scenario};
use cmgl::{lr_test, qmle_fit, quasi_loglik, CmglError, Decision, FitOptions, Link, SampleSet, WeightSet};
use common::{beta, gaussian_sample, normal_matrix, rng, sample};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn exp_data(p: usize, n: usize, seed: u64) -> (WeightSet, DMatrix<f64>) {
    let ws = gen_weights_scenario(Scenario::A, p, 3, seed).unwrap();
    let sigma0 = true_covariance(&ws, Link::Exponential, &beta(&[0.3, 0.15, -0.15, 0.0])).unwrap();
    (ws, gaussian_sample(sigma0.matrix(), n, &mut rng(seed + 1)))
}

fn opts() -> FitOptions {
    FitOptions::default().without_inference()
}

#[test]
fn identical_fits_have_degenerate_variance() {
    let mut g = rng(1);
    let y = sample(normal_matrix(5, 20, &mut g));
    let ws = WeightSet::identity_only(20).unwrap();
    let r = lr_test(&y, &ws, Link::Identity, Link::Exponential, 0.05, &opts());
    assert!(matches!(r, Err(CmglError::DegenerateVariance(_))), "{r:?}");
}

#[test]
fn scalar_covariances_match_closed_form() {
    let (n, p) = (6, 12);
    let y = normal_matrix(n, p, &mut rng(7)) * 1.3;
    let ys = sample(y.clone());
    let ws = WeightSet::identity_only(p).unwrap();
    let fit1 = qmle_fit(&ys, &ws, Link::Identity, &opts()).unwrap();
    let mut fit2 = fit1.clone();
    let (a, b) = (fit1.beta[0], 0.6 * fit1.beta[0]);
    fit2.beta = beta(&[b]);
    fit2.loglik = Some(quasi_loglik(&ys, &ws, Link::Identity, &fit2.beta).unwrap());

    let z_alpha = upper_quantile(0.05).unwrap();
    let r = lr_statistic(&ys, &ws, fit1.clone(), fit2.clone(), 0.05, z_alpha).unwrap();

    // Σ1⁻¹ - Σ2⁻¹ = (1/a - 1/b) I.
    let d = 1.0 / a - 1.0 / b;
    let per: Vec<f64> = (0..n).map(|i| d * y.row(i).norm_squared() / (p as f64).sqrt()).collect();
    let mean = per.iter().sum::<f64>() / n as f64;
    let sd = (per.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
    assert!((r.sigma_hat - sd).abs() < 1e-12 * sd);
    assert_eq!(r.t_lr, fit1.loglik.unwrap() - fit2.loglik.unwrap());
    let z = 2.0 * r.t_lr / (((n * p) as f64).sqrt() * sd);
    assert!((r.z - z).abs() < 1e-10 * z.abs());
    // The maximizer beats a shrunken covariance.
    assert!(r.t_lr > 0.0);
}

#[test]
fn quantile_and_input_checks() {
    assert!((upper_quantile(0.05).unwrap() - 1.6448536269514722).abs() < 1e-9);
    assert!(upper_quantile(0.0).is_err() && upper_quantile(1.0).is_err());
    let (ws, y) = exp_data(40, 3, 2);
    let ys = sample(y.clone());
    assert!(lr_test(&ys, &ws, Link::Exponential, Link::Exponential, 0.05, &opts()).is_err());
    let one = SampleSet::mean_zero(y.rows(0, 1).into_owned()).unwrap();
    assert!(lr_test(&one, &ws, Link::Identity, Link::Exponential, 0.05, &opts()).is_err());
}

#[test]
fn exponential_truth_is_preferred() {
    let (ws, y) = exp_data(150, 30, 5);
    let r = lr_test(&sample(y), &ws, Link::Identity, Link::Exponential, 0.05, &opts()).unwrap();
    assert_eq!(r.decision, Decision::PreferSecond, "z {}", r.z);
    assert!((r.klic_diff - r.t_lr / (30.0 * 150.0)).abs() < 1e-15);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn swapping_links_negates_the_statistic(seed in 0u64..1000, alt in prop::sample::select(vec![Link::Identity, Link::Square, Link::Inverse])) {
        let (ws, y) = exp_data(40, 4, seed);
        let ys = sample(y);
        let ab = lr_test(&ys, &ws, alt, Link::Exponential, 0.05, &opts());
        let ba = lr_test(&ys, &ws, Link::Exponential, alt, 0.05, &opts());
        match (ab, ba) {
            (Ok(ab), Ok(ba)) => {
                prop_assert_eq!(ab.t_lr, -ba.t_lr);
                prop_assert_eq!(ab.z, -ba.z);
                prop_assert_eq!(ab.sigma_hat, ba.sigma_hat);
                prop_assert_eq!(ab.decision, ba.decision.swapped());
                let expected = if ab.z > ab.z_alpha {
                    Decision::PreferFirst
                } else if ab.z < -ab.z_alpha {
                    Decision::PreferSecond
                } else {
                    Decision::Equivalent
                };
                prop_assert_eq!(ab.decision, expected);
            }
            (Err(_), Err(_)) => {}
            (ab, ba) => prop_assert!(false, "one direction failed: {:?} / {:?}", ab.err(), ba.err()),
        }
    }

    #[test]
    fn replicate_order_does_not_matter(seed in 0u64..1000) {
        let (ws, y) = exp_data(40, 5, seed);
        let rev = DMatrix::from_fn(5, 40, |i, j| y[(4 - i, j)]);
        let a = lr_test(&sample(y), &ws, Link::Identity, Link::Exponential, 0.05, &opts());
        let b = lr_test(&sample(rev), &ws, Link::Identity, Link::Exponential, 0.05, &opts());
        if let (Ok(a), Ok(b)) = (a, b) {
            prop_assert!((a.z - b.z).abs() < 1e-6 * (1.0 + a.z.abs()), "{} vs {}", a.z, b.z);
        }
    }
}
