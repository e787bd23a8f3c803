//! Matrix completion with cross-validated SoftImpute on a low-rank matrix
//! with a quarter of its cells removed.
//!
//! ```bash
//! cargo run --release --example soft_impute
//! ```

use nalgebra::DMatrix;
use proprpca::impute::{default_lambda_grid, soft_impute_cv, DEFAULT_HOLDOUT};
use proprpca::ObservedMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn main() -> proprpca::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (n, p) = (120, 8);
    let u = DMatrix::from_fn(n, 2, |_, _| rng.sample::<f64, _>(StandardNormal));
    let v = DMatrix::from_fn(2, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    let full = u * v + DMatrix::from_fn(n, p, |_, _| 0.1 * rng.sample::<f64, _>(StandardNormal));
    let mask = DMatrix::from_fn(n, p, |_, _| rng.random::<f64>() >= 0.25);
    let x = ObservedMatrix::new(full.clone(), mask)?;

    let grid = default_lambda_grid(&x)?;
    let cv = soft_impute_cv(&x, &grid, DEFAULT_HOLDOUT, 2)?;
    for (lambda, rmse) in grid.iter().zip(&cv.holdout_rmse) {
        println!("lambda {lambda:8.3}  held-out RMSE {rmse:.4}");
    }

    let (mut sse, mut m) = (0.0, 0);
    for i in 0..n {
        for j in 0..p {
            if !x.is_observed(i, j) {
                sse += (cv.fit.filled[(i, j)] - full[(i, j)]).powi(2);
                m += 1;
            }
        }
    }
    println!(
        "chose lambda {:.3}; RMSE on the {m} missing cells {:.4}",
        cv.lambda,
        (sse / m as f64).sqrt()
    );
    Ok(())
}
