//! Rolling minimum-variance portfolios driven by fitted covariance models.
//!
//! At each period a covariance is fitted to the single cross-section of
//! returns, with weight matrices built from covariates observed before that
//! period. The fully invested minimum-variance portfolio is then held over the
//! next period.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CmglError, Result};
use crate::estimate::{ols_fit, qmle_fit, Estimator, FitOptions, SampleSet, OLS_PD_FLOOR};
use crate::link::{assemble_b, sigma, BetaVector, CovMatrix, Link};
use crate::lrtest::sample_sd;
use crate::select::backward_select;
use crate::weights::{build_thresholded, covariate_distances, CovariateColumn, WeightSet};

/// Kernel scale used for monthly weight matrices.
pub const DEFAULT_SCALE: f64 = 10.0;
/// Fraction of nonzero off-diagonal entries in each monthly weight matrix.
pub const DEFAULT_DENSITY: f64 = 0.10;

/// Asset returns, one row per period.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnsPanel {
    dates: Vec<String>,
    assets: Vec<String>,
    returns: DMatrix<f64>,
}

impl ReturnsPanel {
    pub fn new(dates: Vec<String>, assets: Vec<String>, returns: DMatrix<f64>) -> Result<Self> {
        if returns.nrows() < 2 {
            return Err(CmglError::input("a returns panel needs at least two periods"));
        }
        if dates.len() != returns.nrows() {
            return Err(CmglError::DimensionMismatch {
                expected: returns.nrows(),
                actual: dates.len(),
            });
        }
        if assets.len() != returns.ncols() {
            return Err(CmglError::DimensionMismatch {
                expected: returns.ncols(),
                actual: assets.len(),
            });
        }
        if returns.ncols() < 2 {
            return Err(CmglError::input("a returns panel needs at least two assets"));
        }
        if returns.iter().any(|v| !v.is_finite()) {
            return Err(CmglError::input("returns must be finite"));
        }
        Ok(Self { dates, assets, returns })
    }

    pub fn periods(&self) -> usize {
        self.returns.nrows()
    }

    pub fn assets(&self) -> &[String] {
        &self.assets
    }

    pub fn dates(&self) -> &[String] {
        &self.dates
    }

    pub fn returns(&self) -> &DMatrix<f64> {
        &self.returns
    }

    fn row(&self, t: usize) -> DVector<f64> {
        self.returns.row(t).transpose()
    }
}

/// Covariates per period, `p x K` each. Entry `t` must already be lagged:
/// it holds values observed before the returns of period `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariatePanel {
    names: Vec<String>,
    periods: Vec<DMatrix<f64>>,
}

impl CovariatePanel {
    pub fn new(names: Vec<String>, periods: Vec<DMatrix<f64>>) -> Result<Self> {
        let Some(first) = periods.first() else {
            return Err(CmglError::input("covariate panel has no periods"));
        };
        let (p, k) = first.shape();
        if k == 0 || names.len() != k {
            return Err(CmglError::input(format!(
                "covariate panel needs one name per column; got {} names for {k} columns",
                names.len()
            )));
        }
        for (t, m) in periods.iter().enumerate() {
            if m.shape() != (p, k) {
                return Err(CmglError::input(format!(
                    "covariates of period {t} are {}x{}, expected {p}x{k}",
                    m.nrows(),
                    m.ncols()
                )));
            }
            if m.iter().any(|v| !v.is_finite()) {
                return Err(CmglError::input(format!("covariates of period {t} are not finite")));
            }
        }
        Ok(Self { names, periods })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn periods(&self) -> usize {
        self.periods.len()
    }

    pub fn period(&self, t: usize) -> Option<&DMatrix<f64>> {
        self.periods.get(t)
    }
}

/// Weight matrices of one period: thresholded kernels of each covariate.
pub fn build_month_weights(
    covariates: &CovariatePanel,
    period: usize,
    scale: f64,
    target_density: f64,
) -> Result<WeightSet> {
    let x = covariates
        .period(period)
        .ok_or_else(|| CmglError::input(format!("no covariates for period {period}")))?;
    let matrices = covariates
        .names
        .iter()
        .enumerate()
        .map(|(k, name)| {
            let col = CovariateColumn::continuous(name.clone(), x.column(k).iter().copied().collect())?;
            build_thresholded(&covariate_distances(&col)?, target_density, scale)
        })
        .collect::<Result<Vec<_>>>()?;
    WeightSet::with_names(x.nrows(), matrices, covariates.names.clone())
}

/// `Σ⁻¹1 / (1'Σ⁻¹1)`.
pub fn minvar_weights(sigma_hat: &CovMatrix) -> Result<DVector<f64>> {
    let p = sigma_hat.dim();
    let chol = sigma_hat
        .matrix()
        .clone()
        .cholesky()
        .ok_or_else(|| CmglError::NotPositiveDefinite {
            min_eigenvalue: sigma_hat.min_eigenvalue(),
        })?;
    let x = chol.solve(&DVector::from_element(p, 1.0));
    let total = x.sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(CmglError::NotPositiveDefinite {
            min_eigenvalue: sigma_hat.min_eigenvalue(),
        });
    }
    let mut w = x / total;
    // Absorb the rounding residue so the budget constraint holds tightly.
    let drift = w.sum() - 1.0;
    w.add_scalar_mut(-drift / p as f64);
    Ok(w)
}

/// Risk-free rate: constant or one value per holding period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RiskFree {
    Constant(f64),
    Series(Vec<f64>),
}

impl Default for RiskFree {
    fn default() -> Self {
        RiskFree::Constant(0.0)
    }
}

impl RiskFree {
    fn expand(&self, periods: usize) -> Result<Vec<f64>> {
        let out = match self {
            RiskFree::Constant(v) => vec![*v; periods],
            RiskFree::Series(v) if v.len() == periods => v.clone(),
            RiskFree::Series(v) => {
                return Err(CmglError::input(format!(
                    "risk-free series has {} values, expected {periods}",
                    v.len()
                )))
            }
        };
        if out.iter().any(|v| !v.is_finite()) {
            return Err(CmglError::input("risk-free rates must be finite"));
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestConfig {
    pub link: Link,
    pub estimator: Estimator,
    /// Refit on the EBIC-selected submodel each period.
    pub select: bool,
    pub gamma: f64,
    pub scale: f64,
    pub target_density: f64,
    /// Subtract the cross-sectional mean from each period's returns before fitting.
    pub demean: bool,
    pub rf: RiskFree,
}

impl Default for BacktestConfig {
    fn default() -> Self {
        Self {
            link: Link::Exponential,
            estimator: Estimator::Qmle,
            select: false,
            gamma: crate::select::DEFAULT_GAMMA,
            scale: DEFAULT_SCALE,
            target_density: DEFAULT_DENSITY,
            demean: true,
            rf: RiskFree::default(),
        }
    }
}

/// One rebalancing: weights fitted at `date`, held over `next_date`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodRecord {
    pub date: String,
    pub next_date: String,
    pub beta: Vec<f64>,
    pub subset: Vec<usize>,
    pub weights: Vec<f64>,
    pub realized: f64,
    pub rf: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortfolioReport {
    pub config: BacktestConfig,
    pub assets: Vec<String>,
    pub periods: Vec<PeriodRecord>,
    pub mean: f64,
    pub sd: f64,
    pub sharpe: f64,
    pub rf: Vec<f64>,
}

impl PortfolioReport {
    pub fn realized(&self) -> Vec<f64> {
        self.periods.iter().map(|r| r.realized).collect()
    }
}

/// Mean over standard deviation of the excess over the mean risk-free rate.
pub fn sharpe_ratio(returns: &[f64], rf: &[f64]) -> Result<(f64, f64, f64)> {
    if returns.len() < 2 {
        return Err(CmglError::DegenerateVariance(
            "at least two realized returns are needed".into(),
        ));
    }
    let mean = returns.iter().sum::<f64>() / returns.len() as f64;
    let sd = sample_sd(returns);
    let scale = returns.iter().fold(0.0f64, |m, r| m.max(r.abs())).max(f64::MIN_POSITIVE);
    if !(sd > 1e-12 * scale) {
        return Err(CmglError::DegenerateVariance(
            "realized portfolio returns have zero spread".into(),
        ));
    }
    let rf_mean = rf.iter().sum::<f64>() / rf.len().max(1) as f64;
    Ok((mean, sd, (mean - rf_mean) / sd))
}

struct PeriodFit {
    beta: BetaVector,
    subset: Vec<usize>,
    sigma: CovMatrix,
}

fn fit_period(y: &SampleSet, weights: &WeightSet, cfg: &BacktestConfig) -> Result<PeriodFit> {
    let link = match cfg.estimator {
        Estimator::Ols => Link::Identity,
        Estimator::Qmle => cfg.link,
    };
    let opts = FitOptions::default().without_inference();
    let fit = if cfg.select {
        backward_select(y, weights, link, cfg.gamma, cfg.estimator)?.fit
    } else {
        match cfg.estimator {
            Estimator::Qmle => qmle_fit(y, weights, link, &opts)?,
            Estimator::Ols => ols_fit(y, weights, &opts)?,
        }
    };
    if fit.estimator == Estimator::Qmle {
        fit.ensure_converged()?;
    }
    let b = assemble_b(weights, &fit.beta)?;
    let sigma = match fit.estimator {
        Estimator::Qmle => sigma(link, &b)?,
        // The unconstrained least-squares fit can leave the cone; use its
        // nearest matrix with a floored spectrum.
        Estimator::Ols => CovMatrix::new(b)?.project_pd(OLS_PD_FLOOR),
    };
    Ok(PeriodFit {
        beta: fit.beta,
        subset: fit.subset,
        sigma,
    })
}

/// Fits every period but the last, forms minimum-variance weights and
/// realizes them on the following period's returns.
pub fn backtest(returns: &ReturnsPanel, covariates: &CovariatePanel, cfg: &BacktestConfig) -> Result<PortfolioReport> {
    let t_total = returns.periods();
    if covariates.periods() < t_total - 1 {
        return Err(CmglError::input(format!(
            "covariates cover {} periods, need at least {}",
            covariates.periods(),
            t_total - 1
        )));
    }
    let p = returns.returns.ncols();
    if covariates.period(0).map(|m| m.nrows()) != Some(p) {
        return Err(CmglError::DimensionMismatch {
            expected: p,
            actual: covariates.period(0).map_or(0, |m| m.nrows()),
        });
    }
    if !(cfg.gamma >= 0.0 && cfg.gamma.is_finite()) {
        return Err(CmglError::input(format!("gamma must be nonnegative, got {}", cfg.gamma)));
    }
    let rf = cfg.rf.expand(t_total - 1)?;

    let periods = (0..t_total - 1)
        .into_par_iter()
        .map(|t| {
            let tag = |e: CmglError| {
                if e.is_usage() {
                    e
                } else {
                    CmglError::Period {
                        period: returns.dates[t].clone(),
                        source: Box::new(e),
                    }
                }
            };
            let mut y = returns.row(t);
            if cfg.demean {
                let m = y.mean();
                y.add_scalar_mut(-m);
            }
            let sample = SampleSet::mean_zero(DMatrix::from_row_slice(1, p, y.as_slice())).map_err(tag)?;
            let weights = build_month_weights(covariates, t, cfg.scale, cfg.target_density)?;
            let fit = fit_period(&sample, &weights, cfg).map_err(tag)?;
            let w = minvar_weights(&fit.sigma).map_err(tag)?;
            let realized = w.dot(&returns.row(t + 1));
            Ok(PeriodRecord {
                date: returns.dates[t].clone(),
                next_date: returns.dates[t + 1].clone(),
                beta: fit.beta.into_vec(),
                subset: fit.subset,
                weights: w.as_slice().to_vec(),
                realized,
                rf: rf[t],
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let realized: Vec<f64> = periods.iter().map(|r| r.realized).collect();
    let (mean, sd, sharpe) = sharpe_ratio(&realized, &rf)?;
    Ok(PortfolioReport {
        config: cfg.clone(),
        assets: returns.assets.clone(),
        periods,
        mean,
        sd,
        sharpe,
        rf,
    })
}
