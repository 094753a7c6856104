use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{CmglError, Result};
use crate::estimate::SampleSet;
use crate::link::{BetaVector, CovMatrix, Link};
use crate::rng::substream;
use crate::weights::{build_thresholded, WeightMatrix, WeightSet};

/// Weight-matrix generating design.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    /// Every matrix is a symmetric Bernoulli(5/p) adjacency.
    A,
    /// As `A`, except matrices 2 and 5 are thresholded kernels of uniform distances.
    B,
}

impl std::str::FromStr for Scenario {
    type Err = CmglError;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "a" => Ok(Scenario::A),
            "b" => Ok(Scenario::B),
            other => Err(CmglError::input(format!("unknown scenario {other:?}; expected a or b"))),
        }
    }
}

/// Distribution of the standardized innovations `Z`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorDist {
    Normal,
    /// `0.9 N(0, 5/9) + 0.1 N(0, 5)`.
    Mixture,
    /// `Exp(1) - 1`.
    ExpStd,
}

impl std::str::FromStr for ErrorDist {
    type Err = CmglError;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "normal" => Ok(ErrorDist::Normal),
            "mixture" => Ok(ErrorDist::Mixture),
            "exp_std" | "exp" => Ok(ErrorDist::ExpStd),
            other => Err(CmglError::input(format!(
                "unknown error distribution {other:?}; expected normal, mixture or exp_std"
            ))),
        }
    }
}

impl ErrorDist {
    pub fn draw<R: Rng + ?Sized>(self, rng: &mut R) -> f64 {
        match self {
            ErrorDist::Normal => rng.sample(StandardNormal),
            ErrorDist::Mixture => {
                let z: f64 = rng.sample(StandardNormal);
                if rng.random::<f64>() < 0.1 {
                    z * 5f64.sqrt()
                } else {
                    z * (5.0f64 / 9.0).sqrt()
                }
            }
            ErrorDist::ExpStd => {
                let e: f64 = Exp1.sample(rng);
                e - 1.0
            }
        }
    }
}

/// True coefficients: the first `k0` weight coefficients follow the link's
/// sign pattern, the remaining ones are zero.
pub fn gen_truth(link: Link, k: usize, k0: usize) -> Result<BetaVector> {
    if k0 > k {
        return Err(CmglError::input(format!("K0 = {k0} exceeds K = {k}")));
    }
    let (intercept, pattern): (f64, &[f64]) = match link {
        Link::Identity => (10.0, &[1.0, -1.0]),
        Link::Exponential => (0.3, &[0.15, -0.15, -0.15]),
        other => {
            return Err(CmglError::input(format!(
                "no simulation truth is defined for the {other} link"
            )))
        }
    };
    let mut beta = vec![0.0; k + 1];
    beta[0] = intercept;
    for j in 0..k0 {
        beta[j + 1] = pattern[j % pattern.len()];
    }
    BetaVector::new(beta)
}

/// Edge probability and thresholded-kernel density used by both scenarios.
fn scenario_density(p: usize) -> f64 {
    (5.0 / p as f64).min(0.999)
}

fn bernoulli_matrix<R: Rng + ?Sized>(p: usize, prob: f64, rng: &mut R) -> Result<WeightMatrix> {
    let mut dense = DMatrix::zeros(p, p);
    for i in 0..p {
        for j in i + 1..p {
            if rng.random::<f64>() < prob {
                dense[(i, j)] = 1.0;
                dense[(j, i)] = 1.0;
            }
        }
    }
    WeightMatrix::from_dense(dense)
}

fn uniform_distance_matrix<R: Rng + ?Sized>(p: usize, lo: f64, hi: f64, rng: &mut R) -> DMatrix<f64> {
    let mut dist = DMatrix::zeros(p, p);
    for i in 0..p {
        for j in i + 1..p {
            let d = lo + (hi - lo) * rng.random::<f64>();
            dist[(i, j)] = d;
            dist[(j, i)] = d;
        }
    }
    dist
}

/// Scenario weight matrices drawn from `rng`, in order `W_1, ..., W_K`.
pub fn gen_weights_with_rng<R: Rng + ?Sized>(
    scenario: Scenario,
    p: usize,
    k: usize,
    rng: &mut R,
) -> Result<WeightSet> {
    if p < 10 {
        return Err(CmglError::input(format!("scenario designs need p >= 10, got {p}")));
    }
    let density = scenario_density(p);
    let pf = p as f64;
    let mut mats = Vec::with_capacity(k);
    for idx in 1..=k {
        let w = match (scenario, idx) {
            (Scenario::B, 2) => {
                let dist = uniform_distance_matrix(p, pf.powf(-0.5), pf.powf(0.5), rng);
                build_thresholded(&dist, density, 1.0)?
            }
            (Scenario::B, 5) => {
                let dist = uniform_distance_matrix(p, pf.powf(-1.0 / 3.0), pf.powf(1.0 / 3.0), rng);
                build_thresholded(&dist, density, 1.0)?
            }
            _ => bernoulli_matrix(p, density, rng)?,
        };
        mats.push(w);
    }
    WeightSet::new(p, mats)
}

/// [`gen_weights_with_rng`] on a generator seeded with `seed`.
pub fn gen_weights_scenario(scenario: Scenario, p: usize, k: usize, seed: u64) -> Result<WeightSet> {
    gen_weights_with_rng(scenario, p, k, &mut substream(seed, 0))
}

/// `n` rows `Σ0^{1/2} Z` with iid innovations from `dist`.
pub fn gen_sample_with_rng<R: Rng + ?Sized>(
    sigma0: &CovMatrix,
    dist: ErrorDist,
    n: usize,
    rng: &mut R,
) -> Result<SampleSet> {
    if !sigma0.is_positive_definite() {
        return Err(CmglError::NotPositiveDefinite {
            min_eigenvalue: sigma0.min_eigenvalue(),
        });
    }
    if n == 0 {
        return Err(CmglError::input("need at least one replicate"));
    }
    let p = sigma0.dim();
    let root = sigma0.eigen().sqrt();
    let mut z = DMatrix::zeros(n, p);
    for i in 0..n {
        for j in 0..p {
            z[(i, j)] = dist.draw(rng);
        }
    }
    SampleSet::mean_zero(z * root)
}

/// [`gen_sample_with_rng`] on a generator seeded with `seed`.
pub fn gen_sample(sigma0: &CovMatrix, dist: ErrorDist, n: usize, seed: u64) -> Result<SampleSet> {
    gen_sample_with_rng(sigma0, dist, n, &mut substream(seed, 0))
}
