//! Building the covariate-plus-spline design on training sites and
//! evaluating the same basis at new sites.
//!
//! ```bash
//! cargo run --release --example design
//! ```

use proprpca::basis::{build_design, eval_design_at, select_knots};
use proprpca::sim::{gen_three_pollutant, Missingness, ScenarioConfig, ScenarioKind};

fn main() -> proprpca::Result<()> {
    let cfg = ScenarioConfig::new(ScenarioKind::ThreePollutantCorr, Missingness::Complete, 6);
    let (_, frame) = gen_three_pollutant(&cfg)?;
    let train: Vec<usize> = (0..cfg.n_train).collect();
    let test: Vec<usize> = (cfg.n_train..cfg.n_train + cfg.n_test).collect();
    let (frame_train, frame_test) = (frame.select_rows(&train)?, frame.select_rows(&test)?);

    let knots = select_knots(frame_train.coords(), 10, cfg.seed)?;
    println!("first knots: {:.1}", knots.rows(0, 3));

    let z = build_design(&frame_train, 10, cfg.seed)?;
    let z_test = eval_design_at(&z, &frame_test)?;
    println!(
        "training design {}x{}, test design {}x{}",
        z.nrows(),
        z.ncols(),
        z_test.nrows(),
        z_test.ncols()
    );
    println!("column sds used for scaling: {:.3?}", z.col_sds().as_slice());
    Ok(())
}
