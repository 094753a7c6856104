//! Comparing two link functions with the quasi-likelihood ratio test.

use cmgl::simlab::{gen_sample, gen_truth, gen_weights_scenario, true_covariance, ErrorDist, Scenario};
use cmgl::{lr_test, FitOptions, Link};

fn main() -> cmgl::Result<()> {
    let (p, k) = (200, 3);
    let weights = gen_weights_scenario(Scenario::A, p, k, 7)?;
    let truth = gen_truth(Link::Exponential, k, 3)?;
    let sigma0 = true_covariance(&weights, Link::Exponential, &truth)?;
    let y = gen_sample(&sigma0, ErrorDist::Normal, 20, 8)?;

    for alt in [Link::Identity, Link::Square] {
        let res = lr_test(&y, &weights, alt, Link::Exponential, 0.05, &FitOptions::default())?;
        println!("{} vs exponential: z {:.3}, decision {:?}", alt.name(), res.z, res.decision);
    }
    Ok(())
}
