//! Preparing real monitoring data: log-proportions of component mass, GIS
//! covariate screening and the covariate PCA used as regressors.
//!
//! ```bash
//! cargo run --release --example preprocess
//! ```

use nalgebra::{DMatrix, DVector};
use proprpca::pipeline::{filter_gis_covariates, gis_pca, preprocess_components};
use proprpca::ObservedMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> proprpca::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 100;

    // component masses with a few unmeasured cells
    let mass = DMatrix::from_fn(n, 4, |_, j| (j + 1) as f64 * rng.random_range(0.5..1.5));
    let totals = DVector::from_fn(n, |i, _| mass.row(i).sum() * 1.5);
    let mask = DMatrix::from_fn(n, 4, |i, j| (i + j) % 17 != 0);
    let logs = preprocess_components(&ObservedMatrix::new(mass, mask)?, &totals)?;
    println!("log-proportions: {} missing of {}", n * 4 - logs.observed_count(), n * 4);

    // six covariates: good, empty, mostly constant, outlying, sparse land use, good
    let covars = DMatrix::from_fn(n, 6, |i, j| match j {
        1 => f64::NAN,
        2 => if i < 90 { 1.0 } else { i as f64 },
        3 => if i < 3 { 1e4 } else { rng.random::<f64>() },
        4 => 0.02 * rng.random::<f64>(),
        _ => rng.random::<f64>() * 10.0 + (i as f64 / 10.0),
    });
    let land_use = [false, false, false, false, true, false];
    let screened = filter_gis_covariates(&covars, &land_use)?;
    println!("kept columns {:?}", screened.kept);
    for (col, rule) in &screened.removed {
        println!("removed column {col}: {rule}");
    }

    let pcs = gis_pca(&screened.covars, 1)?;
    println!("first covariate PC at site 0: {:.3}", pcs[(0, 0)]);
    Ok(())
}
