//! Backward elimination of weight matrices by extended BIC.

use cmgl::simlab::{gen_sample, gen_truth, gen_weights_scenario, true_covariance, ErrorDist, Scenario};
use cmgl::{backward_select, Estimator, Link};

fn main() -> cmgl::Result<()> {
    let (p, k) = (300, 6);
    let weights = gen_weights_scenario(Scenario::A, p, k, 5)?;
    let truth = gen_truth(Link::Exponential, k, 3)?;
    let sigma0 = true_covariance(&weights, Link::Exponential, &truth)?;
    let y = gen_sample(&sigma0, ErrorDist::Normal, 1, 6)?;

    let sel = backward_select(&y, &weights, Link::Exponential, 0.5, Estimator::Qmle)?;
    for step in &sel.trace {
        println!("{:?}  ebic {:?}", step.subset.indices(), step.ebic);
    }
    println!("chosen {:?} (truth uses 0..=3)", sel.chosen.indices());
    println!("refit {:?}", sel.fit.beta.as_slice());
    Ok(())
}
