//! Quasi-maximum-likelihood fit with sandwich standard deviations on data
//! simulated from an exponential-link model.

use cmgl::simlab::{gen_sample, gen_truth, gen_weights_scenario, true_covariance, ErrorDist, Scenario};
use cmgl::{qmle_fit, FitOptions, Link};

fn main() -> cmgl::Result<()> {
    let (p, k) = (300, 5);
    let weights = gen_weights_scenario(Scenario::A, p, k, 1)?;
    let truth = gen_truth(Link::Exponential, k, 3)?;
    let sigma0 = true_covariance(&weights, Link::Exponential, &truth)?;
    let y = gen_sample(&sigma0, ErrorDist::Normal, 1, 2)?;

    let fit = qmle_fit(&y, &weights, Link::Exponential, &FitOptions::default())?;
    println!("converged {} after {} iterations, loglik {:.3}", fit.converged, fit.iterations, fit.loglik.unwrap_or(f64::NAN));
    println!("{:>4} {:>8} {:>9} {:>8}", "", "truth", "estimate", "sd");
    for j in 0..fit.beta.len() {
        println!("b{j:<3} {:>8.3} {:>9.4} {:>8.4}", truth[j], fit.beta[j], fit.sd[j]);
    }
    Ok(())
}
