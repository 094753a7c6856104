//! Rolling minimum-variance portfolio on a synthetic returns panel.

use cmgl::portfolio::{backtest, BacktestConfig, CovariatePanel, ReturnsPanel};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn main() -> cmgl::Result<()> {
    let (t, p) = (12, 60);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    // Assets with a similar characteristic share a common shock.
    let trait_: Vec<f64> = (0..p).map(|_| rng.random::<f64>()).collect();
    let mut returns = DMatrix::zeros(t, p);
    for i in 0..t {
        let common: f64 = rng.sample(StandardNormal);
        for j in 0..p {
            let idio: f64 = rng.sample(StandardNormal);
            returns[(i, j)] = 0.005 + 0.04 * (common * trait_[j] + idio);
        }
    }
    let dates = (1..=t).map(|m| format!("2020-{m:02}")).collect();
    let assets = (0..p).map(|j| format!("asset{j}")).collect();
    let panel = ReturnsPanel::new(dates, assets, returns)?;
    let covs = CovariatePanel::new(
        vec!["trait".into()],
        (0..t).map(|_| DMatrix::from_column_slice(p, 1, &trait_)).collect(),
    )?;

    let report = backtest(&panel, &covs, &BacktestConfig::default())?;
    for r in &report.periods {
        println!("{} -> {}: realized {:+.4}", r.date, r.next_date, r.realized);
    }
    println!("mean {:.4}  sd {:.4}  Sharpe {:.3}", report.mean, report.sd, report.sharpe);
    Ok(())
}
