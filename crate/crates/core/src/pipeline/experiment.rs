use std::collections::HashSet;
use std::time::Instant;

use log::{info, warn};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::basis::{build_design, DEFAULT_K_TILDE};
use crate::data::{Method, ObservedMatrix, ReductionResult, SiteFrame};
use crate::error::{Error, Result};
use crate::impute::{default_lambda_grid, soft_impute_cv, DEFAULT_HOLDOUT};
use crate::linalg::quantile;
use crate::metrics::{prediction_r2, reconstruction_error};
use crate::reduce::{
    pca_fit, predpca_fit, proprpca_krige_fit, proprpca_spline_fit, FitOptions,
};
use crate::sim::{
    apply_missingness, gen_high_dim, gen_three_pollutant, replicate_seed,
    split_train_test, Missingness, ScenarioConfig, Stream,
};
use crate::spatial::{uk_design, uk_fit, uk_predict, UkOptions};

/// Baseline imputer for the arms that need complete data.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Imputer {
    None,
    SoftImpute,
}

impl std::str::FromStr for Imputer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "none" => Ok(Imputer::None),
            "soft_impute" | "softimpute" => Ok(Imputer::SoftImpute),
            other => Err(Error::InvalidConfig(format!("unknown imputer `{other}`"))),
        }
    }
}

impl std::fmt::Display for Imputer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Imputer::None => "none",
            Imputer::SoftImpute => "soft_impute",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    /// Scenario template; its `seed` is replaced per replicate.
    pub scenario: ScenarioConfig,
    pub methods: Vec<Method>,
    pub imputer: Imputer,
    pub q: usize,
    pub replications: usize,
    pub base_seed: u64,
    /// Thread count; `0` uses the rayon default.
    pub workers: usize,
    /// Iteration cap of every reducer.
    pub t_max: usize,
}

impl ExperimentSpec {
    pub fn new(scenario: ScenarioConfig, methods: Vec<Method>, q: usize, replications: usize) -> Self {
        let base_seed = scenario.seed;
        Self {
            scenario,
            methods,
            imputer: Imputer::SoftImpute,
            q,
            replications,
            base_seed,
            workers: 0,
            t_max: FitOptions::default().t_max,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        if self.replications == 0 {
            return Err(Error::InvalidConfig("replications must be at least 1".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidConfig("no methods selected".into()));
        }
        let p = if self.scenario.kind.is_high_dim() { 15 } else { 3 };
        if self.q == 0 || self.q > p {
            return Err(Error::InvalidConfig(format!("q must be in 1..={p}")));
        }
        if self.scenario.missing != Missingness::Complete
            && self.imputer == Imputer::None
            && self.methods.iter().any(|m| m.needs_imputation())
        {
            return Err(Error::InvalidConfig(
                "pca and predpca need imputer=soft_impute when training data has missing entries"
                    .into(),
            ));
        }
        Ok(())
    }
}

/// One (replicate, method, component) cell.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ResultRow {
    pub replicate: usize,
    pub method: String,
    pub pc_index: usize,
    pub prediction_r2: f64,
    /// Reconstruction error of the test matrix from the first `pc_index`
    /// components.
    pub reconstruction_error: f64,
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct TimingRow {
    pub replicate: usize,
    pub method: String,
    pub wall_time_ms: u64,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct FailureRow {
    pub replicate: usize,
    pub method: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadingRow {
    pub replicate: usize,
    pub method: Method,
    pub pc_index: usize,
    pub loading: Vec<f64>,
}

/// `|cos|` between loadings of two methods in one replicate.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct SimilarityRow {
    pub replicate: usize,
    pub method_a: String,
    pub pc_a: usize,
    pub method_b: String,
    pub pc_b: usize,
    pub abs_cos: f64,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct SummaryRow {
    pub method: String,
    pub pc_index: usize,
    pub n: usize,
    pub median_r2: f64,
    pub q25_r2: f64,
    pub q75_r2: f64,
    pub median_re: f64,
}

#[derive(Debug, Clone, Default)]
pub struct ExperimentReport {
    pub rows: Vec<ResultRow>,
    pub loadings: Vec<LoadingRow>,
    pub similarity: Vec<SimilarityRow>,
    pub failures: Vec<FailureRow>,
    pub timings: Vec<TimingRow>,
    pub replications: usize,
}

/// Training and test data of one replicate. Missingness touches the training
/// rows only.
#[derive(Debug, Clone)]
pub struct ReplicateData {
    pub train_sites: Vec<usize>,
    pub test_sites: Vec<usize>,
    pub x_train: ObservedMatrix,
    pub frame_train: SiteFrame,
    pub x_test: DMatrix<f64>,
    pub frame_test: SiteFrame,
    pub seed: u64,
}

pub fn replicate_data(cfg: &ScenarioConfig) -> Result<ReplicateData> {
    cfg.validate()?;
    let (x, frame) = if cfg.kind.is_high_dim() {
        let (x, frame, _) = gen_high_dim(cfg)?;
        (x, frame)
    } else {
        gen_three_pollutant(cfg)?
    };
    let (train_sites, test_sites) =
        split_train_test(cfg.grid_size * cfg.grid_size, cfg.n_train, cfg.n_test, cfg.seed)?;
    let train: Vec<usize> = (0..cfg.n_train).collect();
    let test: Vec<usize> = (cfg.n_train..cfg.n_train + cfg.n_test).collect();
    let frame_train = frame.select_rows(&train)?;
    let x_train = apply_missingness(&x.select_rows(&train)?, &frame_train, cfg.missing, cfg.seed)?;
    Ok(ReplicateData {
        train_sites,
        test_sites,
        x_train,
        frame_train,
        x_test: x.select_rows(&test)?.to_dense()?,
        frame_test: frame.select_rows(&test)?,
        seed: cfg.seed,
    })
}

/// Fitted reducer plus its test-set evaluation.
#[derive(Debug, Clone)]
pub struct MethodOutcome {
    pub method: Method,
    pub fit: ReductionResult,
    /// `n_test x q` kriged scores.
    pub predicted: DMatrix<f64>,
    /// `n_test x q` projections of the centered test matrix.
    pub truth: DMatrix<f64>,
    pub r2: Vec<f64>,
    /// Reconstruction error using the first `l + 1` components.
    pub re: Vec<f64>,
}

/// Completes the training matrix with cross-validated SoftImpute.
pub fn impute_training(x: &ObservedMatrix, seed: u64) -> Result<ObservedMatrix> {
    if x.is_complete() {
        return Ok(x.clone());
    }
    let grid = default_lambda_grid(x)?;
    let cv = soft_impute_cv(x, &grid, DEFAULT_HOLDOUT, replicate_seed(seed, Stream::Impute as u64))?;
    ObservedMatrix::complete(cv.fit.filled)
}

/// Fits one reducer on the training rows and kriges each score to the test
/// sites. Returns the fit, the kriged test scores and the projected test
/// scores.
pub(crate) fn fit_predict(
    data: &ReplicateData,
    method: Method,
    imputed: Option<&ObservedMatrix>,
    opts: &FitOptions,
) -> Result<(ReductionResult, DMatrix<f64>, DMatrix<f64>)> {
    let train_set: HashSet<usize> = data.train_sites.iter().copied().collect();
    assert!(
        data.test_sites.iter().all(|s| !train_set.contains(s)),
        "test site in training data"
    );
    let x_complete = || -> Result<&ObservedMatrix> {
        match imputed {
            Some(x) => Ok(x),
            None if data.x_train.is_complete() => Ok(&data.x_train),
            None => Err(Error::NotComplete),
        }
    };
    let design = || {
        build_design(
            &data.frame_train,
            DEFAULT_K_TILDE,
            replicate_seed(data.seed, Stream::Knots as u64),
        )
    };
    let fit = match method {
        Method::Pca => pca_fit(x_complete()?, opts)?,
        Method::PredPca => predpca_fit(x_complete()?, &design()?, opts)?,
        Method::ProprSpline => proprpca_spline_fit(&data.x_train, &design()?, opts)?,
        Method::ProprKrige => proprpca_krige_fit(&data.x_train, &data.frame_train, opts)?,
    };

    let train_design = uk_design(data.frame_train.coords(), data.frame_train.covars());
    let test_design = uk_design(data.frame_test.coords(), data.frame_test.covars());
    let mut predicted = DMatrix::zeros(data.x_test.nrows(), fit.q());
    for (l, comp) in fit.components.iter().enumerate() {
        let model = uk_fit(
            &comp.score,
            &train_design,
            data.frame_train.coords(),
            &UkOptions::default(),
        )?;
        let (mean, _) = uk_predict(&model, &test_design, data.frame_test.coords())?;
        predicted.set_column(l, &mean);
    }
    let truth = fit.project(&data.x_test)?;
    Ok((fit, predicted, truth))
}

/// Fits one reducer on the training data, kriges its scores to the test
/// sites and scores the predictions.
pub fn run_method(
    data: &ReplicateData,
    method: Method,
    imputed: Option<&ObservedMatrix>,
    opts: &FitOptions,
) -> Result<MethodOutcome> {
    let (fit, predicted, truth) = fit_predict(data, method, imputed, opts)?;
    let xc = fit.standardize(&data.x_test)?;
    let loadings = fit.loadings();
    let q = fit.q();
    let mut r2 = Vec::with_capacity(q);
    let mut re = Vec::with_capacity(q);
    for l in 0..q {
        let t: DVector<f64> = truth.column(l).into_owned();
        let p: DVector<f64> = predicted.column(l).into_owned();
        r2.push(prediction_r2(&t, &p)?);
        re.push(reconstruction_error(
            &xc,
            &predicted.columns(0, l + 1).into_owned(),
            &loadings.columns(0, l + 1).into_owned(),
        )?);
    }
    Ok(MethodOutcome {
        method,
        fit,
        predicted,
        truth,
        r2,
        re,
    })
}

struct ReplicateOutcome {
    rows: Vec<ResultRow>,
    loadings: Vec<LoadingRow>,
    similarity: Vec<SimilarityRow>,
    failures: Vec<FailureRow>,
    timings: Vec<TimingRow>,
}

fn run_replicate(spec: &ExperimentSpec, rep: usize) -> ReplicateOutcome {
    let seed = replicate_seed(spec.base_seed, rep as u64);
    let cfg = ScenarioConfig {
        seed,
        ..spec.scenario.clone()
    };
    let mut out = ReplicateOutcome {
        rows: Vec::new(),
        loadings: Vec::new(),
        similarity: Vec::new(),
        failures: Vec::new(),
        timings: Vec::new(),
    };
    let fail_all = |out: &mut ReplicateOutcome, e: &Error| {
        for m in &spec.methods {
            out.failures.push(FailureRow {
                replicate: rep,
                method: m.tag().into(),
                error: e.to_string(),
            });
        }
    };
    let data = match replicate_data(&cfg) {
        Ok(d) => d,
        Err(e) => {
            fail_all(&mut out, &e);
            return out;
        }
    };
    let needs_impute =
        !data.x_train.is_complete() && spec.methods.iter().any(|m| m.needs_imputation());
    let imputed = if needs_impute && spec.imputer == Imputer::SoftImpute {
        Some(impute_training(&data.x_train, seed))
    } else {
        None
    };
    let opts = FitOptions {
        q: spec.q,
        seed,
        t_max: spec.t_max,
        ..FitOptions::default()
    };

    let mut fitted: Vec<(Method, DMatrix<f64>)> = Vec::new();
    for &method in &spec.methods {
        let start = Instant::now();
        let result = match (&imputed, method.needs_imputation()) {
            (Some(Err(e)), true) => Err(Error::OptimFailed(format!("imputation failed: {e}"))),
            (Some(Ok(x)), true) => run_method(&data, method, Some(x), &opts),
            _ => run_method(&data, method, None, &opts),
        };
        out.timings.push(TimingRow {
            replicate: rep,
            method: method.tag().into(),
            wall_time_ms: start.elapsed().as_millis() as u64,
        });
        match result {
            Ok(o) => {
                for (l, comp) in o.fit.components.iter().enumerate() {
                    out.rows.push(ResultRow {
                        replicate: rep,
                        method: method.tag().into(),
                        pc_index: l + 1,
                        prediction_r2: o.r2[l],
                        reconstruction_error: o.re[l],
                        converged: comp.converged,
                        iterations: comp.iterations,
                    });
                    out.loadings.push(LoadingRow {
                        replicate: rep,
                        method,
                        pc_index: l + 1,
                        loading: comp.loading.iter().copied().collect(),
                    });
                }
                fitted.push((method, o.fit.loadings()));
            }
            Err(e) => {
                warn!("replicate {rep}, {method}: {e}");
                out.failures.push(FailureRow {
                    replicate: rep,
                    method: method.tag().into(),
                    error: e.to_string(),
                });
            }
        }
    }
    for (a, (ma, va)) in fitted.iter().enumerate() {
        for (mb, vb) in &fitted[a + 1..] {
            for la in 0..va.ncols() {
                for lb in 0..vb.ncols() {
                    out.similarity.push(SimilarityRow {
                        replicate: rep,
                        method_a: ma.tag().into(),
                        pc_a: la + 1,
                        method_b: mb.tag().into(),
                        pc_b: lb + 1,
                        abs_cos: va.column(la).dot(&vb.column(lb)).abs(),
                    });
                }
            }
        }
    }
    out
}

/// Runs every replicate of `spec`. Fails with [`Error::TooManyFailures`] when
/// more than 10% of the replicates have a failed method; the partial report
/// is returned alongside so callers can still write it.
pub fn run_experiment(spec: &ExperimentSpec) -> std::result::Result<ExperimentReport, (Error, ExperimentReport)> {
    if let Err(e) = spec.validate() {
        return Err((e, ExperimentReport::default()));
    }
    let run = || -> Vec<ReplicateOutcome> {
        (0..spec.replications)
            .into_par_iter()
            .map(|rep| run_replicate(spec, rep))
            .collect()
    };
    let outcomes = if spec.workers > 0 {
        match rayon::ThreadPoolBuilder::new().num_threads(spec.workers).build() {
            Ok(pool) => pool.install(run),
            Err(e) => return Err((Error::InvalidConfig(e.to_string()), ExperimentReport::default())),
        }
    } else {
        run()
    };
    let mut report = ExperimentReport {
        replications: spec.replications,
        ..Default::default()
    };
    for o in outcomes {
        report.rows.extend(o.rows);
        report.loadings.extend(o.loadings);
        report.similarity.extend(o.similarity);
        report.failures.extend(o.failures);
        report.timings.extend(o.timings);
    }
    canonicalize(&mut report);
    let failed: HashSet<usize> = report.failures.iter().map(|f| f.replicate).collect();
    info!(
        "{} replicates, {} with failures",
        spec.replications,
        failed.len()
    );
    if failed.len() * 10 > spec.replications {
        return Err((
            Error::TooManyFailures {
                failed: failed.len(),
                total: spec.replications,
            },
            report,
        ));
    }
    Ok(report)
}

fn method_rank(tag: &str) -> usize {
    Method::ALL
        .iter()
        .position(|m| m.tag() == tag)
        .unwrap_or(usize::MAX)
}

fn canonicalize(r: &mut ExperimentReport) {
    r.rows
        .sort_by_key(|x| (x.replicate, method_rank(&x.method), x.pc_index));
    r.loadings.sort_by_key(|x| (x.replicate, x.method, x.pc_index));
    r.similarity.sort_by_key(|x| {
        (
            x.replicate,
            method_rank(&x.method_a),
            x.pc_a,
            method_rank(&x.method_b),
            x.pc_b,
        )
    });
    r.failures
        .sort_by(|a, b| (a.replicate, method_rank(&a.method)).cmp(&(b.replicate, method_rank(&b.method))));
    r.timings
        .sort_by_key(|x| (x.replicate, method_rank(&x.method)));
}

/// Median and interquartile range of prediction R^2 per method and component.
pub fn summarize(rows: &[ResultRow]) -> Vec<SummaryRow> {
    let mut keys: Vec<(usize, String, usize)> = rows
        .iter()
        .map(|r| (method_rank(&r.method), r.method.clone(), r.pc_index))
        .collect();
    keys.sort();
    keys.dedup();
    keys.into_iter()
        .map(|(_, method, pc)| {
            let sel: Vec<&ResultRow> = rows
                .iter()
                .filter(|r| r.method == method && r.pc_index == pc)
                .collect();
            let r2: Vec<f64> = sel.iter().map(|r| r.prediction_r2).collect();
            let re: Vec<f64> = sel.iter().map(|r| r.reconstruction_error).collect();
            SummaryRow {
                method,
                pc_index: pc,
                n: sel.len(),
                median_r2: quantile(&r2, 0.5),
                q25_r2: quantile(&r2, 0.25),
                q75_r2: quantile(&r2, 0.75),
                median_re: quantile(&re, 0.5),
            }
        })
        .collect()
}

/// Mean loading of one method and component across replicates.
pub fn mean_loading(report: &ExperimentReport, method: Method, pc_index: usize) -> Option<DVector<f64>> {
    let sel: Vec<&LoadingRow> = report
        .loadings
        .iter()
        .filter(|l| l.method == method && l.pc_index == pc_index)
        .collect();
    let first = sel.first()?;
    let mut acc = DVector::zeros(first.loading.len());
    for l in &sel {
        acc += DVector::from_column_slice(&l.loading);
    }
    Some(acc / sel.len() as f64)
}
