use std::str::FromStr;

use log::warn;
use nalgebra::DVector;
use rayon::prelude::*;

use super::experiment::{fit_predict, impute_training, Imputer, ReplicateData};
use crate::data::{Method, ObservedMatrix, SiteFrame};
use crate::error::{Error, Result};
use crate::metrics::prediction_r2;
use crate::reduce::FitOptions;

/// Which sites train each fold besides the held-out one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LoocvTraining {
    /// Only the other complete sites.
    Complete,
    /// Every other site, including incomplete ones.
    Full,
}

impl FromStr for LoocvTraining {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "complete" => Ok(LoocvTraining::Complete),
            "full" | "all" => Ok(LoocvTraining::Full),
            other => Err(Error::InvalidConfig(format!("unknown training set `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoocvSpec {
    pub methods: Vec<Method>,
    pub q: usize,
    pub training: LoocvTraining,
    pub imputer: Imputer,
    pub seed: u64,
    /// Thread count; `0` uses the rayon default.
    pub workers: usize,
}

/// Held-out site, method and component with its true and kriged score.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct LoocvFold {
    pub site: usize,
    pub method: String,
    pub pc_index: usize,
    pub truth: f64,
    pub predicted: f64,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct LoocvRow {
    pub method: String,
    pub pc_index: usize,
    pub folds: usize,
    /// Squared correlation over the pooled (truth, prediction) pairs.
    pub pooled_r2: f64,
}

#[derive(Debug, Clone, Default)]
pub struct LoocvReport {
    pub rows: Vec<LoocvRow>,
    pub folds: Vec<LoocvFold>,
    /// `(site, method, error)` of failed folds.
    pub failures: Vec<(usize, String, String)>,
}

pub const MIN_COMPLETE_SITES: usize = 20;

fn run_fold(
    x: &ObservedMatrix,
    frame: &SiteFrame,
    spec: &LoocvSpec,
    held: usize,
    train: Vec<usize>,
) -> (Vec<LoocvFold>, Vec<(usize, String, String)>) {
    let mut folds = Vec::new();
    let mut failures = Vec::new();
    let data = (|| -> Result<ReplicateData> {
        Ok(ReplicateData {
            x_train: x.select_rows(&train)?,
            frame_train: frame.select_rows(&train)?,
            x_test: x.filled(f64::NAN).rows(held, 1).into_owned(),
            frame_test: frame.select_rows(&[held])?,
            train_sites: train,
            test_sites: vec![held],
            seed: spec.seed,
        })
    })();
    let data = match data {
        Ok(d) => d,
        Err(e) => {
            for m in &spec.methods {
                failures.push((held, m.tag().to_string(), e.to_string()));
            }
            return (folds, failures);
        }
    };
    let imputed = if !data.x_train.is_complete()
        && spec.imputer == Imputer::SoftImpute
        && spec.methods.iter().any(|m| m.needs_imputation())
    {
        Some(impute_training(&data.x_train, spec.seed))
    } else {
        None
    };
    let opts = FitOptions {
        q: spec.q,
        seed: spec.seed,
        ..FitOptions::default()
    };
    for &method in &spec.methods {
        let result = match (&imputed, method.needs_imputation()) {
            (Some(Err(e)), true) => Err(Error::OptimFailed(format!("imputation failed: {e}"))),
            (Some(Ok(xi)), true) => fit_predict(&data, method, Some(xi), &opts),
            _ => fit_predict(&data, method, None, &opts),
        };
        match result {
            Ok((_, predicted, truth)) => {
                for l in 0..predicted.ncols() {
                    folds.push(LoocvFold {
                        site: held,
                        method: method.tag().into(),
                        pc_index: l + 1,
                        truth: truth[(0, l)],
                        predicted: predicted[(0, l)],
                    });
                }
            }
            Err(e) => {
                warn!("fold {held}, {method}: {e}");
                failures.push((held, method.tag().into(), e.to_string()));
            }
        }
    }
    (folds, failures)
}

/// Leave-one-site-out cross-validation over the complete sites.
pub fn run_loocv(x: &ObservedMatrix, frame: &SiteFrame, spec: &LoocvSpec) -> Result<LoocvReport> {
    if frame.n() != x.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "{} data rows, {} sites",
            x.nrows(),
            frame.n()
        )));
    }
    if spec.methods.is_empty() || spec.q == 0 || spec.q > x.ncols() {
        return Err(Error::InvalidConfig("need at least one method and 1 <= q <= p".into()));
    }
    let complete: Vec<usize> = (0..x.nrows())
        .filter(|&i| (0..x.ncols()).all(|j| x.is_observed(i, j)))
        .collect();
    if complete.len() < MIN_COMPLETE_SITES {
        return Err(Error::InvalidConfig(format!(
            "{} complete sites, need at least {MIN_COMPLETE_SITES}",
            complete.len()
        )));
    }
    let pool_sites = match spec.training {
        LoocvTraining::Complete => complete.clone(),
        LoocvTraining::Full => (0..x.nrows()).collect(),
    };
    if spec.training == LoocvTraining::Full
        && !x.is_complete()
        && spec.imputer == Imputer::None
        && spec.methods.iter().any(|m| m.needs_imputation())
    {
        return Err(Error::InvalidConfig(
            "pca and predpca need imputer=soft_impute with incomplete training sites".into(),
        ));
    }

    let run = || -> Vec<(Vec<LoocvFold>, Vec<(usize, String, String)>)> {
        complete
            .par_iter()
            .map(|&held| {
                let train: Vec<usize> = pool_sites.iter().copied().filter(|&s| s != held).collect();
                run_fold(x, frame, spec, held, train)
            })
            .collect()
    };
    let outcomes = if spec.workers > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(spec.workers)
            .build()
            .map_err(|e| Error::InvalidConfig(e.to_string()))?
            .install(run)
    } else {
        run()
    };
    let mut report = LoocvReport::default();
    for (f, e) in outcomes {
        report.folds.extend(f);
        report.failures.extend(e);
    }
    for &method in &spec.methods {
        for pc in 1..=spec.q {
            let sel: Vec<&LoocvFold> = report
                .folds
                .iter()
                .filter(|f| f.method == method.tag() && f.pc_index == pc)
                .collect();
            let t = DVector::from_iterator(sel.len(), sel.iter().map(|f| f.truth));
            let p = DVector::from_iterator(sel.len(), sel.iter().map(|f| f.predicted));
            report.rows.push(LoocvRow {
                method: method.tag().into(),
                pc_index: pc,
                folds: sel.len(),
                pooled_r2: prediction_r2(&t, &p).unwrap_or(f64::NAN),
            });
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};

    fn linear_sites(n: usize, seed: u64) -> (ObservedMatrix, SiteFrame) {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let coords = DMatrix::from_fn(n, 2, |_, _| rng.random::<f64>() * 50.0);
        let covars = DMatrix::from_fn(n, 2, |_, _| rng.random::<f64>() - 0.5);
        let v = [0.6, 0.0, 0.8];
        let x = DMatrix::from_fn(n, 3, |i, j| (3.0 * covars[(i, 0)] - 2.0 * covars[(i, 1)]) * v[j]);
        (ObservedMatrix::complete(x).unwrap(), SiteFrame::new(coords, covars).unwrap())
    }

    fn spec() -> LoocvSpec {
        LoocvSpec {
            methods: vec![Method::Pca],
            q: 1,
            training: LoocvTraining::Complete,
            imputer: Imputer::None,
            seed: 2,
            workers: 1,
        }
    }

    #[test]
    fn realizable_scores_are_recovered() {
        let (x, frame) = linear_sites(30, 1);
        let report = run_loocv(&x, &frame, &spec()).unwrap();
        assert_eq!(report.rows.len(), 1);
        assert!(report.failures.is_empty(), "{:?}", report.failures.first());
        assert_eq!(report.rows[0].folds, 30);
        assert!(report.failures.is_empty());
        assert!(report.rows[0].pooled_r2 > 0.99, "{}", report.rows[0].pooled_r2);
    }

    #[test]
    fn permuted_scores_are_not_predictable() {
        let (x, frame) = linear_sites(200, 3);
        let mut order: Vec<usize> = (0..200).collect();
        order.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(5));
        let shuffled = x.select_rows(&order).unwrap();
        let report = run_loocv(&shuffled, &frame, &spec()).unwrap();
        assert_eq!(report.rows[0].folds, 200);
        assert!(report.rows[0].pooled_r2 < 0.05, "{}", report.rows[0].pooled_r2);
    }

    #[test]
    fn too_few_complete_sites() {
        let (x, frame) = linear_sites(25, 2);
        let holed = x.mask_more(|i, j| i < 10 && j == 1).unwrap();
        assert!(matches!(run_loocv(&holed, &frame, &spec()), Err(Error::InvalidConfig(_))));
        let full = LoocvSpec { training: LoocvTraining::Full, ..spec() };
        assert!(run_loocv(&holed, &frame, &full).is_err());
    }
}
