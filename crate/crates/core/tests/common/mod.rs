//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use cmgl::{BetaVector, CovariateColumn, Link, SampleSet, WeightSet};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn scalar_link(link: Link, x: f64) -> f64 {
    match link {
        Link::Identity => x,
        Link::Exponential => x.exp(),
        Link::Square => x * x,
        Link::Inverse => 1.0 / x,
        Link::Sar => 1.0 / (x * x),
    }
}

/// `B = b0 I + sum_k b_k W_k` from dense matrices.
pub fn dense_b(ws: &WeightSet, beta: &[f64]) -> DMatrix<f64> {
    let p = ws.dim();
    let mut b = DMatrix::identity(p, p) * beta[0];
    for (k, bk) in beta.iter().enumerate().skip(1) {
        b += ws.dense(k) * *bk;
    }
    b
}

/// `G(B)` through a fresh symmetric eigendecomposition.
pub fn dense_sigma(link: Link, b: &DMatrix<f64>) -> DMatrix<f64> {
    let e = SymmetricEigen::new(b.clone());
    let g = e.eigenvalues.map(|v| scalar_link(link, v));
    &e.eigenvectors * DMatrix::from_diagonal(&g) * e.eigenvectors.transpose()
}

/// Gaussian-form loglikelihood via Cholesky; `None` when not positive definite.
pub fn oracle_loglik(y: &DMatrix<f64>, sigma: &DMatrix<f64>) -> Option<f64> {
    let (n, p) = y.shape();
    let chol = sigma.clone().cholesky()?;
    let logdet: f64 = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let mut quad = 0.0;
    for i in 0..n {
        let yi: DVector<f64> = y.row(i).transpose();
        quad += yi.dot(&chol.solve(&yi));
    }
    Some(-0.5 * (n * p) as f64 * (2.0 * std::f64::consts::PI).ln() - 0.5 * n as f64 * logdet - 0.5 * quad)
}

/// Loglikelihood at `beta` computed without the library's likelihood code.
pub fn oracle_at(link: Link, y: &DMatrix<f64>, ws: &WeightSet, beta: &[f64]) -> Option<f64> {
    let b = dense_b(ws, beta);
    if link != Link::Identity && link != Link::Exponential {
        let e = SymmetricEigen::new(b.clone());
        let min_abs = e.eigenvalues.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
        if min_abs < 1e-8 {
            return None;
        }
    }
    oracle_loglik(y, &dense_sigma(link, &b))
}

/// `k` Gaussian-kernel weights from uniform covariates.
pub fn kernel_weights(p: usize, k: usize, rng: &mut ChaCha8Rng) -> WeightSet {
    let mats = (0..k)
        .map(|j| {
            let x: Vec<f64> = (0..p).map(|_| rng.random::<f64>() * 2.0).collect();
            cmgl::build_continuous(&CovariateColumn::continuous(format!("x{j}"), x).unwrap(), 1.0).unwrap()
        })
        .collect();
    WeightSet::new(p, mats).unwrap()
}

/// Coefficients whose `B` is comfortably inside the feasible region.
pub fn feasible_beta(link: Link, ws: &WeightSet, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut beta = vec![0.0; ws.n_coef()];
    let mut radius = 0.0;
    for (k, b) in beta.iter_mut().enumerate().skip(1) {
        *b = rng.random_range(-0.4..0.4) / ws.dim() as f64 * 4.0;
        radius += b.abs() * ws.dense(k).row_sum().amax();
    }
    beta[0] = match link {
        Link::Exponential => rng.random_range(-0.5..0.5),
        _ => radius + rng.random_range(0.5..1.5),
    };
    beta
}

pub fn normal_matrix(n: usize, p: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Draws `n` rows with covariance `sigma`.
pub fn gaussian_sample(sigma: &DMatrix<f64>, n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let l = sigma.clone().cholesky().expect("positive definite").l();
    normal_matrix(n, sigma.nrows(), rng) * l.transpose()
}

pub fn sample(y: DMatrix<f64>) -> SampleSet {
    SampleSet::mean_zero(y).unwrap()
}

pub fn beta(v: &[f64]) -> BetaVector {
    BetaVector::new(v.to_vec()).unwrap()
}

/// Nelder-Mead minimizer; infeasible points should return `+inf`.
pub fn nelder_mead(f: &dyn Fn(&[f64]) -> f64, x0: &[f64], step: f64, tol: f64, max_eval: usize) -> Vec<f64> {
    let d = x0.len();
    let mut simplex: Vec<Vec<f64>> = vec![x0.to_vec()];
    for i in 0..d {
        let mut x = x0.to_vec();
        x[i] += if x[i].abs() > 1e-3 { step * x[i].abs() } else { step };
        simplex.push(x);
    }
    let mut vals: Vec<f64> = simplex.iter().map(|x| f(x)).collect();
    let mut evals = d + 1;
    while evals < max_eval {
        let mut order: Vec<usize> = (0..=d).collect();
        order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        vals = order.iter().map(|&i| vals[i]).collect();
        let spread = (vals[d] - vals[0]).abs();
        let size = simplex
            .iter()
            .skip(1)
            .map(|x| x.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if spread < tol && size < tol {
            break;
        }
        let centroid: Vec<f64> = (0..d).map(|j| simplex[..d].iter().map(|x| x[j]).sum::<f64>() / d as f64).collect();
        let along = |t: f64| -> Vec<f64> { (0..d).map(|j| centroid[j] + t * (simplex[d][j] - centroid[j])).collect() };
        let xr = along(-1.0);
        let fr = f(&xr);
        evals += 1;
        if fr < vals[0] {
            let xe = along(-2.0);
            let fe = f(&xe);
            evals += 1;
            if fe < fr {
                simplex[d] = xe;
                vals[d] = fe;
            } else {
                simplex[d] = xr;
                vals[d] = fr;
            }
        } else if fr < vals[d - 1] {
            simplex[d] = xr;
            vals[d] = fr;
        } else {
            let xc = if fr < vals[d] { along(-0.5) } else { along(0.5) };
            let fc = f(&xc);
            evals += 1;
            if fc < vals[d].min(fr) {
                simplex[d] = xc;
                vals[d] = fc;
            } else {
                for i in 1..=d {
                    let x: Vec<f64> = (0..d).map(|j| simplex[0][j] + 0.5 * (simplex[i][j] - simplex[0][j])).collect();
                    vals[i] = f(&x);
                    simplex[i] = x;
                }
                evals += d;
            }
        }
    }
    let best = (0..=d).min_by(|&a, &b| vals[a].total_cmp(&vals[b])).unwrap();
    simplex[best].clone()
}
