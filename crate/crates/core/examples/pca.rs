//! Ordinary PCA on one replicate of the correlated three-pollutant scenario.
//!
//! ```bash
//! cargo run --release --example pca
//! ```

use proprpca::reduce::{pca_fit, FitOptions};
use proprpca::sim::{gen_three_pollutant, Missingness, ScenarioConfig, ScenarioKind};

fn main() -> proprpca::Result<()> {
    let cfg = ScenarioConfig::new(ScenarioKind::ThreePollutantCorr, Missingness::Complete, 1);
    let (x, _frame) = gen_three_pollutant(&cfg)?;
    let fit = pca_fit(&x, &FitOptions::with_q(2))?;

    println!("column means: {:.3?}", fit.column_means.as_slice());
    for (l, c) in fit.components.iter().enumerate() {
        println!(
            "PC{}: loading {:.3?} after {} iterations",
            l + 1,
            c.loading.as_slice(),
            c.iterations
        );
    }
    Ok(())
}
