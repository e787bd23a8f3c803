//! Predictive PCA: scores restricted to the span of covariates plus a
//! thin-plate spline basis, compared against plain PCA on the same data.
//!
//! ```bash
//! cargo run --release --example predpca
//! ```

use proprpca::basis::{build_design, DEFAULT_K_TILDE};
use proprpca::reduce::{pca_fit, predpca_fit, FitOptions};
use proprpca::sim::{gen_three_pollutant, Missingness, ScenarioConfig, ScenarioKind};

fn main() -> proprpca::Result<()> {
    let cfg = ScenarioConfig::new(ScenarioKind::ThreePollutantIndep, Missingness::Complete, 3);
    let (x, frame) = gen_three_pollutant(&cfg)?;
    let z = build_design(&frame, DEFAULT_K_TILDE, cfg.seed)?;
    println!("design: {} sites x {} columns", z.nrows(), z.ncols());

    let opts = FitOptions::with_q(1);
    let pca = pca_fit(&x, &opts)?;
    let pred = predpca_fit(&x, &z, &opts)?;
    println!("PCA loading     {:.3?}", pca.components[0].loading.as_slice());
    println!("PredPCA loading {:.3?}", pred.components[0].loading.as_slice());
    Ok(())
}
