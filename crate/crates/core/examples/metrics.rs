//! Scoring one fitted reducer on held-out sites: squared-correlation R^2,
//! MSE-based R^2 and reconstruction error as components are added.
//!
//! ```bash
//! cargo run --release --example metrics
//! ```

use nalgebra::DVector;
use proprpca::metrics::mse_r2;
use proprpca::pipeline::{replicate_data, run_method};
use proprpca::reduce::FitOptions;
use proprpca::sim::{Missingness, ScenarioConfig, ScenarioKind};
use proprpca::Method;

fn main() -> proprpca::Result<()> {
    let cfg = ScenarioConfig::new(ScenarioKind::HighDimS2, Missingness::Complete, 21);
    let data = replicate_data(&cfg)?;
    for method in [Method::Pca, Method::ProprSpline] {
        let out = run_method(&data, method, None, &FitOptions::with_q(3))?;
        for l in 0..3 {
            let t: DVector<f64> = out.truth.column(l).into_owned();
            let p: DVector<f64> = out.predicted.column(l).into_owned();
            println!(
                "{:<16} PC{}: R^2 {:.3}, MSE R^2 {:>7.3}, RE with {} PCs {:.1}",
                method.tag(),
                l + 1,
                out.r2[l],
                mse_r2(&t, &p)?,
                l + 1,
                out.re[l]
            );
        }
    }
    Ok(())
}
