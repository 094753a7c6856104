//! Closed-form least-squares fit under the identity link, with standard
//! deviations that allow non-Gaussian errors.

use cmgl::simlab::{gen_sample, gen_truth, gen_weights_scenario, true_covariance, ErrorDist, Scenario};
use cmgl::{ols_fit, FitOptions, Link};

fn main() -> cmgl::Result<()> {
    let (p, k) = (300, 4);
    let weights = gen_weights_scenario(Scenario::A, p, k, 3)?;
    let truth = gen_truth(Link::Identity, k, 3)?;
    let sigma0 = true_covariance(&weights, Link::Identity, &truth)?;
    let y = gen_sample(&sigma0, ErrorDist::Mixture, 1, 4)?;

    let fit = ols_fit(&y, &weights, &FitOptions::default())?;
    for j in 0..fit.beta.len() {
        println!("b{j}: truth {:>6.2}  estimate {:>8.4}  sd {:.4}", truth[j], fit.beta[j], fit.sd[j]);
    }
    if let Some(mu4) = fit.mu4_hat {
        println!("estimated fourth moment {mu4:.3}");
    }
    Ok(())
}
