//! A small estimation and selection study with summary measures.

use cmgl::simlab::{run_part1, ErrorDist, Scenario, SimConfig};
use cmgl::{Estimator, Link};

fn main() -> cmgl::Result<()> {
    let cfg = SimConfig {
        p: 200,
        k: 6,
        k0: 3,
        link: Link::Exponential,
        scenario: Scenario::A,
        dist: ErrorDist::Normal,
        n: 1,
        reps: 10,
        gamma: 0.5,
        seed: 2024,
        estimator: Estimator::Qmle,
        select: true,
    };
    let rep = run_part1(&cfg)?;
    for c in &rep.coefficients {
        println!("b{}: truth {:>6.2} mean {:>8.4} SD {:.4} ESD {:.4}", c.index, c.truth, c.mean_estimate, c.sd, c.esd);
    }
    println!("EE {:.4}  SE {:.4}  FE {:.4}", rep.ee.mean, rep.se.mean, rep.fe.mean);
    if let (Some(tpr), Some(fdr), Some(ct)) = (rep.tpr, rep.fdr, rep.ct) {
        println!("TPR {:.3}  FDR {:.3}  CT {:.2}", tpr.mean, fdr.mean, ct);
    }
    Ok(())
}
