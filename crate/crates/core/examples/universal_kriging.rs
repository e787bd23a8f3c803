//! Universal kriging of a score field: maximum-likelihood fit on 300 sites,
//! prediction at 100 held-out sites.
//!
//! ```bash
//! cargo run --release --example universal_kriging
//! ```

use nalgebra::{DMatrix, DVector};
use proprpca::metrics::prediction_r2;
use proprpca::sim::{gen_grid, sample_gaussian_field, split_train_test};
use proprpca::spatial::{uk_design, uk_fit, uk_predict, ExponentialCovParams, UkOptions};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> proprpca::Result<()> {
    let grid = gen_grid(100)?;
    let (train, test) = split_train_test(grid.nrows(), 300, 100, 9)?;
    let sites: Vec<usize> = train.iter().chain(&test).copied().collect();
    let coords = grid.select_rows(&sites);

    let truth = ExponentialCovParams::new(4.0, 0.25, 30.0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let field = sample_gaussian_field(&coords, &truth, 1, &mut rng)?;
    let covars = DMatrix::from_fn(coords.nrows(), 1, |i, _| (coords[(i, 0)] / 15.0).sin() * (coords[(i, 1)] / 20.0).cos());
    let y = DVector::from_fn(coords.nrows(), |i, _| 2.0 * covars[(i, 0)] + field[(i, 0)]);

    let design = uk_design(&coords, &covars);
    let tr: Vec<usize> = (0..300).collect();
    let te: Vec<usize> = (300..400).collect();
    let model = uk_fit(
        &y.select_rows(&tr),
        &design.select_rows(&tr),
        &coords.select_rows(&tr),
        &UkOptions::default(),
    )?;
    println!(
        "sill {:.2}, nugget {:.2}, range {:.1}, loglik {:.1}",
        model.cov.partial_sill, model.cov.nugget, model.cov.range, model.loglik
    );

    let (pred, var) = uk_predict(&model, &design.select_rows(&te), &coords.select_rows(&te))?;
    println!("test R^2 {:.3}, mean kriging variance {:.3}", prediction_r2(&y.select_rows(&te), &pred)?, var.mean());
    Ok(())
}
