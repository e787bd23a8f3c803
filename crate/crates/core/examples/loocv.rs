//! Leave-one-site-out cross-validation on a small monitoring network where
//! some sites miss a pollutant. Only complete sites are held out; every
//! other site trains each fold.
//!
//! ```bash
//! cargo run --release --example loocv
//! ```

use proprpca::pipeline::{run_loocv, Imputer, LoocvSpec, LoocvTraining};
use proprpca::sim::{apply_mcar, gen_three_pollutant, Missingness, ScenarioConfig, ScenarioKind};
use proprpca::Method;

fn main() -> proprpca::Result<()> {
    let mut cfg = ScenarioConfig::new(ScenarioKind::ThreePollutantCorr, Missingness::Complete, 8);
    cfg.n_train = 70;
    cfg.n_test = 10;
    let (full, frame) = gen_three_pollutant(&cfg)?;
    let x = apply_mcar(&full, 0.1, cfg.seed)?;

    let spec = LoocvSpec {
        methods: vec![Method::Pca, Method::PredPca, Method::ProprSpline],
        q: 2,
        training: LoocvTraining::Full,
        imputer: Imputer::SoftImpute,
        seed: cfg.seed,
        workers: 0,
    };
    let report = run_loocv(&x, &frame, &spec)?;
    for row in &report.rows {
        println!(
            "{:<16} PC{} pooled R^2 {:.3} over {} folds",
            row.method, row.pc_index, row.pooled_r2, row.folds
        );
    }
    println!("{} failed folds", report.failures.len());
    Ok(())
}
