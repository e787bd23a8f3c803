//! ProPrPCA with a spline mean, fitted directly on a matrix with 30% of its
//! cells missing. No imputation step is needed.
//!
//! ```bash
//! cargo run --release --example spline
//! ```

use proprpca::basis::{build_design, DEFAULT_K_TILDE};
use proprpca::reduce::{proprpca_spline_fit, FitOptions};
use proprpca::sim::{apply_mcar, gen_high_dim, Missingness, ScenarioConfig, ScenarioKind};

fn main() -> proprpca::Result<()> {
    let cfg = ScenarioConfig::new(ScenarioKind::HighDimS1, Missingness::Complete, 11);
    let (full, frame, _) = gen_high_dim(&cfg)?;
    let x = apply_mcar(&full, 0.3, cfg.seed)?;
    println!("missing fraction {:.2}", x.missing_fraction());

    let z = build_design(&frame, DEFAULT_K_TILDE, cfg.seed)?;
    let opts = FitOptions {
        trace: true,
        ..FitOptions::with_q(3)
    };
    let fit = proprpca_spline_fit(&x, &z, &opts)?;
    for (l, c) in fit.components.iter().enumerate() {
        let top: Vec<usize> = (0..c.loading.len()).filter(|&j| c.loading[j].abs() > 0.2).collect();
        println!(
            "PC{}: gamma^2 {:.3}, {} iterations, heavy pollutants {:?}",
            l + 1,
            c.noise_var,
            c.iterations,
            top
        );
    }
    Ok(())
}
