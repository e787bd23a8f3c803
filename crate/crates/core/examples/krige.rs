//! ProPrPCA with a latent Gaussian-process score, fitted by EM. Prints the
//! estimated spatial parameters of each component.
//!
//! ```bash
//! cargo run --release --example krige
//! ```

use proprpca::reduce::{proprpca_krige_fit, FitOptions};
use proprpca::sim::{apply_mcar, gen_three_pollutant, Missingness, ScenarioConfig, ScenarioKind};

fn main() -> proprpca::Result<()> {
    let mut cfg = ScenarioConfig::new(ScenarioKind::ThreePollutantCorr, Missingness::Complete, 5);
    cfg.n_train = 200;
    cfg.n_test = 5;
    let (full, frame) = gen_three_pollutant(&cfg)?;
    let train: Vec<usize> = (0..cfg.n_train).collect();
    let (full, frame) = (full.select_rows(&train)?, frame.select_rows(&train)?);
    let x = apply_mcar(&full, 0.2, cfg.seed)?;

    let fit = proprpca_krige_fit(&x, &frame, &FitOptions::with_q(2))?;
    for (l, c) in fit.components.iter().enumerate() {
        let sp = c.spatial_params.expect("kriging components carry spatial parameters");
        println!(
            "PC{}: loading {:.3?}, sill {:.3}, range {:.1}, gamma^2 {:.3}, converged {}",
            l + 1,
            c.loading.as_slice(),
            sp.partial_sill,
            sp.range,
            c.noise_var,
            c.converged
        );
    }
    Ok(())
}
