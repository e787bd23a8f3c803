//! The simulation generators and missingness mechanisms.
//!
//! ```bash
//! cargo run --release --example simulate
//! ```

use proprpca::linalg::sample_variance;
use proprpca::sim::{
    apply_missingness, gen_high_dim, gen_three_pollutant, Missingness, ScenarioConfig,
    ScenarioKind,
};

fn main() -> proprpca::Result<()> {
    let cfg = ScenarioConfig::new(ScenarioKind::ThreePollutantCorr, Missingness::Mar, 4);
    let (x, frame) = gen_three_pollutant(&cfg)?;
    let x = apply_missingness(&x, &frame, cfg.missing, cfg.seed)?;
    println!(
        "{}: {} sites x {} pollutants, {} covariates, {:.1}% missing under {}",
        cfg.kind,
        x.nrows(),
        x.ncols(),
        frame.k(),
        100.0 * x.missing_fraction(),
        cfg.missing
    );

    for kind in [ScenarioKind::HighDimS1, ScenarioKind::HighDimS2] {
        let cfg = ScenarioConfig::new(kind, Missingness::Mar, 4);
        let (x, frame, scores) = gen_high_dim(&cfg)?;
        let x = apply_missingness(&x, &frame, cfg.missing, cfg.seed)?;
        let vars: Vec<f64> = scores
            .column_iter()
            .map(|c| sample_variance(&c.into_owned()))
            .collect();
        println!(
            "{kind}: score variances {:.2?}, {:.1}% missing",
            vars,
            100.0 * x.missing_fraction()
        );
    }
    Ok(())
}
