//! Monte Carlo designs for estimation, selection and link-test studies.
//!
//! Each replication draws its weight matrices and responses from its own
//! substream of the configured seed, so results do not depend on the number
//! of worker threads.

mod design;
mod measures;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use design::{
    gen_sample, gen_sample_with_rng, gen_truth, gen_weights_scenario, gen_weights_with_rng, ErrorDist, Scenario,
};
pub use measures::{estimation_measures, selection_measures, EstimationMeasures, SelectionMeasures};

use crate::error::{CmglError, Result};
use crate::estimate::{ols_fit, qmle_fit, Estimator, FitOptions, FitResult, SampleSet};
use crate::link::{assemble_b, sigma, BetaVector, CovMatrix, Link};
use crate::lrtest::{lr_statistic, upper_quantile, Decision, LrTestResult};
use crate::rng::{cell_stream, substream};
use crate::select::{backward_select_from, ModelSubset};
use crate::weights::WeightSet;

/// Coefficients summarized in the default report.
pub const REPORTED_COEFFICIENTS: usize = 5;

fn default_k0() -> usize {
    3
}
fn default_n() -> usize {
    1
}
fn default_gamma() -> f64 {
    crate::select::DEFAULT_GAMMA
}
fn default_true() -> bool {
    true
}
fn default_estimator() -> Estimator {
    Estimator::Qmle
}
fn default_scenario() -> Scenario {
    Scenario::A
}
fn default_dist() -> ErrorDist {
    ErrorDist::Normal
}

/// Estimation and selection study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub p: usize,
    pub k: usize,
    #[serde(default = "default_k0")]
    pub k0: usize,
    pub link: Link,
    #[serde(default = "default_scenario")]
    pub scenario: Scenario,
    #[serde(default = "default_dist")]
    pub dist: ErrorDist,
    #[serde(default = "default_n")]
    pub n: usize,
    pub reps: usize,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    pub seed: u64,
    #[serde(default = "default_estimator")]
    pub estimator: Estimator,
    /// Run backward EBIC selection in every replication.
    #[serde(default = "default_true")]
    pub select: bool,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(CmglError::input("reps must be at least 1"));
        }
        if self.n == 0 {
            return Err(CmglError::input("n must be at least 1"));
        }
        if self.k0 > self.k {
            return Err(CmglError::input(format!("K0 = {} exceeds K = {}", self.k0, self.k)));
        }
        if self.p < 10 {
            return Err(CmglError::input("simulations need p >= 10"));
        }
        if self.estimator == Estimator::Ols && self.link != Link::Identity {
            return Err(CmglError::input("the OLS estimator requires the identity link"));
        }
        if !(self.gamma >= 0.0) {
            return Err(CmglError::input("gamma must be non-negative"));
        }
        gen_truth(self.link, self.k, self.k0).map(|_| ())
    }
}

/// One successful estimation replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepRecord {
    pub rep: usize,
    pub beta_hat: Vec<f64>,
    pub sd: Vec<f64>,
    pub iterations: usize,
    pub estimation: EstimationMeasures,
    pub selected: Option<ModelSubset>,
    pub selection: Option<SelectionMeasures>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailedRep {
    pub rep: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSd {
    pub mean: f64,
    pub sd: f64,
}

impl MeanSd {
    /// Mean and standard deviation with the `1/m` denominator.
    pub fn of(xs: &[f64]) -> Self {
        let m = xs.len() as f64;
        if xs.is_empty() {
            return MeanSd { mean: f64::NAN, sd: f64::NAN };
        }
        let mean = xs.iter().sum::<f64>() / m;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / m;
        MeanSd { mean, sd: var.sqrt() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefSummary {
    pub index: usize,
    pub truth: f64,
    pub mean_estimate: f64,
    /// Average asymptotic standard deviation.
    pub sd: f64,
    /// Monte Carlo standard deviation of the estimates.
    pub esd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub config: SimConfig,
    pub truth: Vec<f64>,
    pub successes: usize,
    pub failures: Vec<FailedRep>,
    pub coefficients: Vec<CoefSummary>,
    pub ee: MeanSd,
    pub se: MeanSd,
    pub fe: MeanSd,
    pub tpr: Option<MeanSd>,
    pub fdr: Option<MeanSd>,
    pub ct: Option<f64>,
    /// Per-replication results; written separately as CSV.
    #[serde(skip)]
    pub records: Vec<RepRecord>,
}

impl SimReport {
    pub fn failure_rate(&self) -> f64 {
        self.failures.len() as f64 / (self.failures.len() + self.successes) as f64
    }

    pub fn median_ee(&self) -> f64 {
        let mut ee: Vec<f64> = self.records.iter().map(|r| r.estimation.ee).collect();
        median(&mut ee)
    }

    /// Aggregates a subset of records (e.g. the first `m` replications).
    pub fn restricted(&self, reps: usize) -> SimReport {
        let records: Vec<RepRecord> = self.records.iter().filter(|r| r.rep < reps).cloned().collect();
        let failures: Vec<FailedRep> = self.failures.iter().filter(|f| f.rep < reps).cloned().collect();
        let mut config = self.config.clone();
        config.reps = reps.min(config.reps);
        let truth = BetaVector::new(self.truth.clone()).expect("stored truth is finite");
        summarize(config, &truth, records, failures)
    }
}

/// Median; averages the middle pair for even lengths.
pub fn median(xs: &mut [f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.sort_by(f64::total_cmp);
    let m = xs.len();
    if m % 2 == 1 {
        xs[m / 2]
    } else {
        0.5 * (xs[m / 2 - 1] + xs[m / 2])
    }
}

/// Monte Carlo standard deviation with the `1/m` denominator.
pub fn empirical_sd(xs: &[f64]) -> f64 {
    MeanSd::of(xs).sd
}

/// True covariance for given weights and coefficients; errors unless positive definite.
pub fn true_covariance(weights: &WeightSet, link: Link, truth: &BetaVector) -> Result<CovMatrix> {
    let b = assemble_b(weights, truth)?;
    let s = sigma(link, &b)?;
    if !s.is_positive_definite() {
        return Err(CmglError::NotPositiveDefinite {
            min_eigenvalue: s.min_eigenvalue(),
        });
    }
    Ok(s)
}

/// Draws the weights and sample of replication `rep`.
pub fn part1_data(cfg: &SimConfig, truth: &BetaVector, rep: usize) -> Result<(WeightSet, CovMatrix, SampleSet)> {
    let mut rng = substream(cfg.seed, rep as u64);
    let weights = gen_weights_with_rng(cfg.scenario, cfg.p, cfg.k, &mut rng)?;
    let sigma0 = true_covariance(&weights, cfg.link, truth)?;
    let y = gen_sample_with_rng(&sigma0, cfg.dist, cfg.n, &mut rng)?;
    Ok((weights, sigma0, y))
}

fn run_rep(cfg: &SimConfig, truth: &BetaVector, rep: usize) -> Result<RepRecord> {
    let (weights, sigma0, y) = part1_data(cfg, truth, rep)?;
    let opts = FitOptions::default();
    let fit = match cfg.estimator {
        Estimator::Qmle => qmle_fit(&y, &weights, cfg.link, &opts)?,
        Estimator::Ols => ols_fit(&y, &weights, &opts)?,
    };
    fit.ensure_converged()?;
    let sigma_hat = sigma(cfg.link, &assemble_b(&weights, &fit.beta)?)?;
    let estimation = estimation_measures(&fit.beta, truth, sigma_hat.matrix(), sigma0.matrix());
    let (selected, selection) = if cfg.select {
        let sel = backward_select_from(&y, &weights, cfg.link, cfg.gamma, cfg.estimator, Some(&fit))?;
        let m = selection_measures(&sel.chosen, &ModelSubset::support(truth));
        (Some(sel.chosen), Some(m))
    } else {
        (None, None)
    };
    Ok(RepRecord {
        rep,
        beta_hat: fit.beta.as_slice().to_vec(),
        sd: fit.sd.clone(),
        iterations: fit.iterations,
        estimation,
        selected,
        selection,
    })
}

fn summarize(config: SimConfig, truth: &BetaVector, records: Vec<RepRecord>, failures: Vec<FailedRep>) -> SimReport {
    let ncoef = truth.len().min(REPORTED_COEFFICIENTS);
    let coefficients = (0..ncoef)
        .map(|k| {
            let est: Vec<f64> = records.iter().map(|r| r.beta_hat[k]).collect();
            let sds: Vec<f64> = records.iter().map(|r| r.sd[k]).collect();
            CoefSummary {
                index: k,
                truth: truth[k],
                mean_estimate: MeanSd::of(&est).mean,
                sd: MeanSd::of(&sds).mean,
                esd: empirical_sd(&est),
            }
        })
        .collect();
    let pick = |f: &dyn Fn(&RepRecord) -> f64| -> Vec<f64> { records.iter().map(f).collect() };
    let ee = MeanSd::of(&pick(&|r| r.estimation.ee));
    let se = MeanSd::of(&pick(&|r| r.estimation.se));
    let fe = MeanSd::of(&pick(&|r| r.estimation.fe));
    let sel: Vec<SelectionMeasures> = records.iter().filter_map(|r| r.selection).collect();
    let (tpr, fdr, ct) = if config.select && !sel.is_empty() {
        let tpr: Vec<f64> = sel.iter().map(|m| m.tpr).collect();
        let fdr: Vec<f64> = sel.iter().map(|m| m.fdr).collect();
        let ct: Vec<f64> = sel.iter().map(|m| m.ct).collect();
        (Some(MeanSd::of(&tpr)), Some(MeanSd::of(&fdr)), Some(MeanSd::of(&ct).mean))
    } else {
        (None, None, None)
    };
    SimReport {
        config,
        truth: truth.as_slice().to_vec(),
        successes: records.len(),
        failures,
        coefficients,
        ee,
        se,
        fe,
        tpr,
        fdr,
        ct,
        records,
    }
}

/// Runs `cfg.reps` replications on the current rayon pool.
pub fn run_part1(cfg: &SimConfig) -> Result<SimReport> {
    cfg.validate()?;
    let truth = gen_truth(cfg.link, cfg.k, cfg.k0)?;
    let outcomes: Vec<std::result::Result<RepRecord, FailedRep>> = (0..cfg.reps)
        .into_par_iter()
        .map(|rep| {
            run_rep(cfg, &truth, rep).map_err(|e| {
                log::warn!("replication {rep} failed: {e}");
                FailedRep {
                    rep,
                    reason: e.to_string(),
                }
            })
        })
        .collect();
    let (mut records, mut failures) = (Vec::new(), Vec::new());
    for o in outcomes {
        match o {
            Ok(r) => records.push(r),
            Err(f) => failures.push(f),
        }
    }
    if records.is_empty() {
        return Err(CmglError::DegenerateSample(format!(
            "all {} replications failed; first failure: {}",
            failures.len(),
            failures[0].reason
        )));
    }
    Ok(summarize(cfg.clone(), &truth, records, failures))
}

fn default_grid_p() -> Vec<usize> {
    vec![100, 300]
}
fn default_grid_n() -> Vec<usize> {
    vec![25, 75]
}
fn default_k2() -> usize {
    15
}
fn default_alpha() -> f64 {
    crate::lrtest::DEFAULT_ALPHA
}
fn default_alternatives() -> Vec<Link> {
    vec![Link::Identity, Link::Square, Link::Inverse]
}

/// Link-test study: exponential truth, each alternative link against the exponential.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Part2Config {
    #[serde(default = "default_grid_p")]
    pub grid_p: Vec<usize>,
    #[serde(default = "default_grid_n")]
    pub grid_n: Vec<usize>,
    #[serde(default = "default_k2")]
    pub k: usize,
    #[serde(default = "default_k0")]
    pub k0: usize,
    #[serde(default = "default_scenario")]
    pub scenario: Scenario,
    #[serde(default = "default_dist")]
    pub dist: ErrorDist,
    pub reps: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    pub seed: u64,
    #[serde(default = "default_alternatives")]
    pub alternatives: Vec<Link>,
}

impl Part2Config {
    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(CmglError::input("reps must be at least 1"));
        }
        if self.grid_n.iter().any(|&n| n < 2) {
            return Err(CmglError::input("the link test needs n >= 2"));
        }
        if self.grid_p.iter().any(|&p| p < 10) {
            return Err(CmglError::input("simulations need p >= 10"));
        }
        if self.alternatives.is_empty() || self.alternatives.contains(&Link::Exponential) {
            return Err(CmglError::input(
                "alternatives must be non-empty and exclude the exponential link",
            ));
        }
        upper_quantile(self.alpha)?;
        gen_truth(Link::Exponential, self.k, self.k0).map(|_| ())
    }

    /// Grid cells in report order.
    pub fn cells(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for &p in &self.grid_p {
            for &n in &self.grid_n {
                out.push((p, n));
            }
        }
        out
    }
}

/// One link-test replication: fits and statistics for every alternative.
pub struct Part2Replication {
    pub weights: WeightSet,
    pub sample: SampleSet,
    pub exponential: FitResult,
    /// Alternative link as the first model, exponential as the second.
    pub tests: Vec<(Link, Result<LrTestResult>)>,
}

/// Runs replication `rep` of grid cell `cell` (an index into [`Part2Config::cells`]).
pub fn part2_replication(cfg: &Part2Config, cell: usize, rep: usize) -> Result<Part2Replication> {
    let (p, n) = cfg.cells()[cell];
    let truth = gen_truth(Link::Exponential, cfg.k, cfg.k0)?;
    let mut rng = substream(cfg.seed, cell_stream(cell, rep));
    let weights = gen_weights_with_rng(cfg.scenario, p, cfg.k, &mut rng)?;
    let sigma0 = true_covariance(&weights, Link::Exponential, &truth)?;
    let sample = gen_sample_with_rng(&sigma0, cfg.dist, n, &mut rng)?;
    let opts = FitOptions::default().without_inference();
    let z_alpha = upper_quantile(cfg.alpha)?;
    let exponential = qmle_fit(&sample, &weights, Link::Exponential, &opts)?;
    exponential.ensure_converged()?;
    let tests = cfg
        .alternatives
        .iter()
        .map(|&link| {
            let res = qmle_fit(&sample, &weights, link, &opts).and_then(|fit| {
                fit.ensure_converged()?;
                lr_statistic(&sample, &weights, fit, exponential.clone(), cfg.alpha, z_alpha)
            });
            (link, res)
        })
        .collect();
    Ok(Part2Replication {
        weights,
        sample,
        exponential,
        tests,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Part2Cell {
    pub p: usize,
    pub n: usize,
    pub alternative: Link,
    pub successes: usize,
    pub failures: usize,
    /// Percent of replications where the alternative link is preferred.
    pub prefer_alternative_pct: f64,
    /// Percent where neither link is rejected.
    pub non_rejection_pct: f64,
    /// Percent rejecting toward the exponential link.
    pub rejection_pct: f64,
    pub mean_z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Part2Report {
    pub config: Part2Config,
    pub cells: Vec<Part2Cell>,
    pub failures: Vec<Part2Failure>,
    #[serde(skip)]
    pub records: Vec<Part2Record>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Part2Failure {
    pub p: usize,
    pub n: usize,
    pub rep: usize,
    pub alternative: Option<Link>,
    pub reason: String,
}

/// Per-replication statistic for the raw output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Part2Record {
    pub p: usize,
    pub n: usize,
    pub rep: usize,
    pub alternative: Link,
    pub t_lr: f64,
    pub z: f64,
    pub sigma_hat: f64,
    pub decision: Decision,
}

pub fn run_part2(cfg: &Part2Config) -> Result<Part2Report> {
    cfg.validate()?;
    let cells = cfg.cells();
    let jobs: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..cfg.reps).map(move |r| (c, r)))
        .collect();
    let outcomes: Vec<(usize, usize, Result<Part2Replication>)> = jobs
        .par_iter()
        .map(|&(c, r)| (c, r, part2_replication(cfg, c, r)))
        .collect();

    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (c, rep, outcome) in outcomes {
        let (p, n) = cells[c];
        match outcome {
            Err(e) => failures.push(Part2Failure {
                p,
                n,
                rep,
                alternative: None,
                reason: e.to_string(),
            }),
            Ok(r) => {
                for (link, res) in r.tests {
                    match res {
                        Ok(t) => records.push(Part2Record {
                            p,
                            n,
                            rep,
                            alternative: link,
                            t_lr: t.t_lr,
                            z: t.z,
                            sigma_hat: t.sigma_hat,
                            decision: t.decision,
                        }),
                        Err(e) => failures.push(Part2Failure {
                            p,
                            n,
                            rep,
                            alternative: Some(link),
                            reason: e.to_string(),
                        }),
                    }
                }
            }
        }
    }

    let mut summary = Vec::new();
    for &(p, n) in &cells {
        for &link in &cfg.alternatives {
            let rs: Vec<&Part2Record> = records
                .iter()
                .filter(|r| r.p == p && r.n == n && r.alternative == link)
                .collect();
            let failed = failures
                .iter()
                .filter(|f| f.p == p && f.n == n && f.alternative.is_none_or(|a| a == link))
                .count();
            let m = rs.len() as f64;
            let pct = |d: Decision| 100.0 * rs.iter().filter(|r| r.decision == d).count() as f64 / m;
            summary.push(Part2Cell {
                p,
                n,
                alternative: link,
                successes: rs.len(),
                failures: failed,
                prefer_alternative_pct: pct(Decision::PreferFirst),
                non_rejection_pct: pct(Decision::Equivalent),
                rejection_pct: pct(Decision::PreferSecond),
                mean_z: rs.iter().map(|r| r.z).sum::<f64>() / m,
            });
        }
    }
    Ok(Part2Report {
        config: cfg.clone(),
        cells: summary,
        failures,
        records,
    })
}
