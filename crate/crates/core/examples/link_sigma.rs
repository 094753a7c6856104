//! The covariance implied by a coefficient vector under each link, and its
//! derivative along one weight matrix.

use cmgl::{assemble_b, build_discrete, dsigma, sigma, BetaVector, CovariateColumn, Link, WeightSet};

fn main() -> cmgl::Result<()> {
    let w = build_discrete(&CovariateColumn::discrete("g", &[0, 0, 1, 1])?)?;
    let ws = WeightSet::new(4, vec![w])?;
    let beta = BetaVector::new(vec![1.0, 0.3])?;
    let b = assemble_b(&ws, &beta)?;

    for link in [Link::Identity, Link::Exponential, Link::Square, Link::Inverse, Link::Sar] {
        let s = sigma(link, &b)?;
        println!("{:<11} Σ[0,0] {:.4}  Σ[0,1] {:.4}  min eigenvalue {:.4}", link.name(), s.matrix()[(0, 0)], s.matrix()[(0, 1)], s.min_eigenvalue());
    }
    let d = dsigma(Link::Exponential, &b, ws.get(1).expect("present"))?;
    println!("dΣ/dβ1 under the exponential link:\n{d}");
    Ok(())
}
