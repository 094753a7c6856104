//! Building similarity matrices from covariates.

use cmgl::{build_continuous, build_discrete, build_thresholded, covariate_distances, density, CovariateColumn, WeightSet};

fn main() -> cmgl::Result<()> {
    let size = CovariateColumn::continuous("size", vec![0.1, 0.4, 0.5, 1.3, 2.0, 2.2])?;
    let sector = CovariateColumn::discrete("sector", &["tech", "tech", "energy", "retail", "energy", "tech"])?;

    let kernel = build_continuous(&size, 1.0)?;
    let groups = build_discrete(&sector)?;
    // Keep only the closest 20% of pairs.
    let sparse = build_thresholded(&covariate_distances(&size)?, 0.2, 1.0)?;

    let ws = WeightSet::with_names(6, vec![kernel, groups, sparse], vec!["size".into(), "sector".into(), "size_sparse".into()])?;
    for (k, name) in ws.names().iter().enumerate() {
        let w = ws.get(k + 1).expect("present");
        println!("{name:<12} density {:.3}", density(w));
    }
    println!("sector matrix:\n{}", ws.dense(2));
    Ok(())
}
