//! A small Monte Carlo comparison of all four reducers: fit on training
//! sites, krige the scores to test sites and summarize R^2 per component.
//!
//! ```bash
//! cargo run --release --example experiment
//! ```

use proprpca::pipeline::{run_experiment, summarize, ExperimentSpec};
use proprpca::sim::{Missingness, ScenarioConfig, ScenarioKind};
use proprpca::Method;

fn main() {
    let scenario = ScenarioConfig::new(ScenarioKind::ThreePollutantCorr, Missingness::Mcar(0.2), 17);
    let spec = ExperimentSpec::new(scenario, Method::ALL.to_vec(), 2, 3);
    let report = match run_experiment(&spec) {
        Ok(r) => r,
        Err((e, r)) => {
            eprintln!("too many failed replicates: {e}");
            r
        }
    };
    println!("{:<16} {:>3} {:>9} {:>9}", "method", "pc", "median", "iqr");
    for row in summarize(&report.rows) {
        println!(
            "{:<16} {:>3} {:>9.3} {:>4.2}-{:.2}",
            row.method, row.pc_index, row.median_r2, row.q25_r2, row.q75_r2
        );
    }
    println!("{} failures", report.failures.len());
}
