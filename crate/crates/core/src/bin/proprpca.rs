use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;
use nalgebra::{DMatrix, DVector};

use proprpca::basis::{build_design, DEFAULT_K_TILDE};
use proprpca::metrics::{prediction_r2, reconstruction_error};
use proprpca::pipeline::config::{parse_config, read_config, spec_from_config, Config, KEYS};
use proprpca::pipeline::io::{
    dense_table, observed_table, read_loadings, read_sites, read_table, write_loadings,
    write_report, write_sites, write_table, Table,
};
use proprpca::pipeline::{
    filter_gis_covariates, gis_pca, impute_training, preprocess_components, replicate_data,
    run_experiment, run_loocv, Imputer, LoocvSpec, LoocvTraining,
};
use proprpca::reduce::{
    pca_fit, predpca_fit, proprpca_krige_fit, proprpca_spline_fit, FitOptions,
};
use proprpca::sim::{Missingness, ScenarioConfig, ScenarioKind};
use proprpca::spatial::{uk_design, uk_fit, uk_predict, UkOptions};
use proprpca::{Error, Method, ObservedMatrix, Result};

#[derive(Parser)]
#[command(name = "proprpca", version, about = "Spatially predictive PCA for multi-pollutant data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate one replicate of a simulation scenario as CSV files.
    Simulate(SimulateArgs),
    /// Fit a reducer to a components file and write loadings and scores.
    Fit(FitArgs),
    /// Krige fitted scores to new sites.
    Predict(PredictArgs),
    /// Score predicted test scores against a test components file.
    Evaluate(EvaluateArgs),
    /// Run a replicated simulation experiment.
    #[command(after_help = experiment_keys())]
    Experiment(ExperimentArgs),
    /// Leave-one-site-out cross-validation on real data.
    Loocv(LoocvArgs),
    /// Convert component masses to log-proportions and screen GIS covariates.
    Preprocess(PreprocessArgs),
}

fn experiment_keys() -> String {
    let mut s = String::from("Config file keys (key = value, one per line):\n");
    for (k, d) in KEYS {
        s.push_str(&format!("  {k:<13} {d}\n"));
    }
    s.push_str("\nFlags override file keys. PROPRPCA_WORKERS sets the default worker count.");
    s
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    scenario: ScenarioKind,
    #[arg(long, default_value = "complete")]
    missing: Missingness,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output directory for train_/test_ sites and components files.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FitArgs {
    /// Sites CSV: site_id, x, y, covariates...
    #[arg(long)]
    sites: PathBuf,
    /// Components CSV: site_id, pollutant columns; empty cell = missing.
    #[arg(long)]
    components: PathBuf,
    #[arg(long)]
    method: Method,
    #[arg(long, default_value_t = 1)]
    q: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Imputer used by pca and predpca when the data has missing cells.
    #[arg(long, default_value = "soft_impute")]
    imputer: Imputer,
    /// Output directory for loadings.csv and scores.csv.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    /// Sites CSV of the fitting sites.
    #[arg(long)]
    sites: PathBuf,
    /// scores.csv written by `fit`.
    #[arg(long)]
    scores: PathBuf,
    /// Sites CSV of the prediction sites.
    #[arg(long)]
    new_sites: PathBuf,
    /// Fix the kriging nugget at zero.
    #[arg(long)]
    zero_nugget: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Predicted scores (output of `predict`).
    #[arg(long)]
    predictions: PathBuf,
    /// Complete components CSV at the prediction sites.
    #[arg(long)]
    components: PathBuf,
    /// loadings.csv written by `fit`.
    #[arg(long)]
    loadings: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Flat key = value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    scenario: Option<String>,
    #[arg(long)]
    missing: Option<String>,
    #[arg(long)]
    methods: Option<String>,
    #[arg(long)]
    imputer: Option<String>,
    #[arg(long)]
    q: Option<usize>,
    #[arg(long)]
    replications: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, env = "PROPRPCA_WORKERS")]
    workers: Option<usize>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

#[derive(Args)]
struct LoocvArgs {
    #[arg(long)]
    sites: PathBuf,
    #[arg(long)]
    components: PathBuf,
    #[arg(long, default_value = "pca,predpca,proprpca_spline")]
    methods: String,
    #[arg(long, default_value_t = 3)]
    q: usize,
    /// `complete` (other complete sites) or `full` (all other sites).
    #[arg(long, default_value = "complete")]
    training: LoocvTraining,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, env = "PROPRPCA_WORKERS", default_value_t = 0)]
    workers: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PreprocessArgs {
    /// Raw component masses: site_id, total column, component columns.
    #[arg(long)]
    components: PathBuf,
    #[arg(long, default_value = "total")]
    total_column: String,
    /// GIS file: site_id, x, y, covariates (empty cell = missing).
    #[arg(long)]
    sites: PathBuf,
    /// Comma-separated land-use share covariates.
    #[arg(long, default_value = "")]
    land_use: String,
    #[arg(long, default_value_t = 5)]
    n_pcs: usize,
    #[arg(long)]
    out: PathBuf,
}

fn ids(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

fn names(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}{i}")).collect()
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let cfg = ScenarioConfig::new(a.scenario, a.missing, a.seed);
    let data = replicate_data(&cfg)?;
    std::fs::create_dir_all(&a.out)?;
    let p = data.x_test.ncols();
    let covs = names("r", data.frame_train.k());
    let train_ids = ids("train", data.x_train.nrows());
    let test_ids = ids("test", data.x_test.nrows());
    write_sites(&a.out.join("train_sites.csv"), &train_ids, &covs, &data.frame_train)?;
    write_sites(&a.out.join("test_sites.csv"), &test_ids, &covs, &data.frame_test)?;
    write_table(
        &a.out.join("train_components.csv"),
        &observed_table(&train_ids, &names("x", p), &data.x_train),
    )?;
    write_table(
        &a.out.join("test_components.csv"),
        &dense_table(&test_ids, &names("x", p), &data.x_test),
    )?;
    info!("wrote {}", a.out.display());
    Ok(())
}

fn load_pair(sites: &Path, components: &Path) -> Result<(Vec<String>, proprpca::SiteFrame, Table)> {
    let (site_ids, _, frame) = read_sites(sites, &[])?;
    let comps = read_table(components)?.align_to(&site_ids)?;
    Ok((site_ids, frame, comps))
}

fn fit(a: FitArgs) -> Result<()> {
    let (site_ids, frame, comps) = load_pair(&a.sites, &a.components)?;
    let x = comps.to_observed()?;
    let opts = FitOptions {
        q: a.q,
        seed: a.seed,
        ..FitOptions::default()
    };
    opts.validate()?;
    let complete = || -> Result<ObservedMatrix> {
        match a.imputer {
            _ if x.is_complete() => Ok(x.clone()),
            Imputer::SoftImpute => impute_training(&x, a.seed),
            Imputer::None => Err(Error::NotComplete),
        }
    };
    let fit = match a.method {
        Method::Pca => pca_fit(&complete()?, &opts)?,
        Method::PredPca => predpca_fit(&complete()?, &build_design(&frame, DEFAULT_K_TILDE, a.seed)?, &opts)?,
        Method::ProprSpline => {
            proprpca_spline_fit(&x, &build_design(&frame, DEFAULT_K_TILDE, a.seed)?, &opts)?
        }
        Method::ProprKrige => proprpca_krige_fit(&x, &frame, &opts)?,
    };
    std::fs::create_dir_all(&a.out)?;
    write_loadings(&a.out.join("loadings.csv"), &comps.columns, &fit.loadings(), &fit.column_means)?;
    write_table(
        &a.out.join("scores.csv"),
        &dense_table(&site_ids, &names("pc", fit.q()), &fit.scores()),
    )?;
    for (l, c) in fit.components.iter().enumerate() {
        info!(
            "pc{}: {} iterations, converged {}, noise variance {:.4}",
            l + 1,
            c.iterations,
            c.converged,
            c.noise_var
        );
    }
    Ok(())
}

fn predict(a: PredictArgs) -> Result<()> {
    let (train_ids, _, frame) = read_sites(&a.sites, &[])?;
    let scores = read_table(&a.scores)?.align_to(&train_ids)?;
    let (new_ids, _, new_frame) = read_sites(&a.new_sites, &[])?;
    let design = uk_design(frame.coords(), frame.covars());
    let new_design = uk_design(new_frame.coords(), new_frame.covars());
    let s = scores.to_dense()?;
    let opts = UkOptions {
        zero_nugget: a.zero_nugget,
        ..UkOptions::default()
    };
    let mut out = DMatrix::zeros(new_frame.n(), 2 * s.ncols());
    let mut cols = Vec::new();
    for l in 0..s.ncols() {
        let model = uk_fit(&s.column(l).into_owned(), &design, frame.coords(), &opts)?;
        let (mean, var) = uk_predict(&model, &new_design, new_frame.coords())?;
        out.set_column(2 * l, &mean);
        out.set_column(2 * l + 1, &var);
        cols.push(scores.columns[l].clone());
        cols.push(format!("{}_var", scores.columns[l]));
    }
    write_table(&a.out, &dense_table(&new_ids, &cols, &out))
}

fn evaluate(a: EvaluateArgs) -> Result<()> {
    let (columns, v, means) = read_loadings(&a.loadings)?;
    let preds = read_table(&a.predictions)?;
    let comps = read_table(&a.components)?.align_to(&preds.site_ids)?;
    if comps.columns != columns {
        return Err(Error::SchemaMismatch("component columns differ from the loadings file".into()));
    }
    let x = comps.to_dense()?;
    let xc = DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| x[(i, j)] - means[j]);
    let truth = &xc * &v;
    let mut u_hat = DMatrix::zeros(x.nrows(), v.ncols());
    for l in 0..v.ncols() {
        let name = format!("pc{}", l + 1);
        let col = preds.column(&name)?;
        for (i, val) in col.into_iter().enumerate() {
            u_hat[(i, l)] = val.ok_or_else(|| Error::SchemaMismatch(format!("empty `{name}` cell")))?;
        }
    }
    let mut w = match &a.out {
        Some(p) => csv::Writer::from_writer(Box::new(std::fs::File::create(p)?) as Box<dyn std::io::Write>),
        None => csv::Writer::from_writer(Box::new(std::io::stdout()) as Box<dyn std::io::Write>),
    };
    w.write_record(["pc_index", "prediction_r2", "reconstruction_error"])?;
    for l in 0..v.ncols() {
        let r2 = prediction_r2(&truth.column(l).into_owned(), &u_hat.column(l).into_owned())?;
        let re = reconstruction_error(
            &xc,
            &u_hat.columns(0, l + 1).into_owned(),
            &v.columns(0, l + 1).into_owned(),
        )?;
        w.write_record([(l + 1).to_string(), r2.to_string(), re.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

fn experiment(a: ExperimentArgs) -> Result<()> {
    let mut cfg: Config = match &a.config {
        Some(p) => read_config(p)?,
        None => parse_config("")?,
    };
    let mut set = |k: &str, v: Option<String>| {
        if let Some(v) = v {
            cfg.insert(k.to_string(), v);
        }
    };
    set("scenario", a.scenario);
    set("missing", a.missing);
    set("methods", a.methods);
    set("imputer", a.imputer);
    set("q", a.q.map(|v| v.to_string()));
    set("replications", a.replications.map(|v| v.to_string()));
    set("seed", a.seed.map(|v| v.to_string()));
    set("workers", a.workers.map(|v| v.to_string()));
    set("output_dir", a.output_dir.map(|p| p.display().to_string()));
    let spec = spec_from_config(&cfg)?;
    let dir = PathBuf::from(cfg.get("output_dir").map_or("experiment_out", String::as_str));
    match run_experiment(&spec) {
        Ok(report) => write_report(&dir, &report),
        Err((e, report)) => {
            if matches!(e, Error::TooManyFailures { .. }) {
                write_report(&dir, &report)?;
            }
            Err(e)
        }
    }
}

fn loocv(a: LoocvArgs) -> Result<()> {
    let (_, frame, comps) = load_pair(&a.sites, &a.components)?;
    let x = comps.to_observed()?;
    let methods = a.methods.split(',').map(str::parse).collect::<Result<Vec<Method>>>()?;
    let spec = LoocvSpec {
        methods,
        q: a.q,
        training: a.training,
        imputer: Imputer::SoftImpute,
        seed: a.seed,
        workers: a.workers,
    };
    let report = run_loocv(&x, &frame, &spec)?;
    std::fs::create_dir_all(&a.out)?;
    let mut w = csv::Writer::from_path(a.out.join("loocv_summary.csv"))?;
    for r in &report.rows {
        w.serialize(r)?;
    }
    w.flush()?;
    let mut w = csv::Writer::from_path(a.out.join("loocv_folds.csv"))?;
    for f in &report.folds {
        w.serialize(f)?;
    }
    w.flush()?;
    for (site, method, err) in &report.failures {
        log::warn!("fold {site} ({method}) failed: {err}");
    }
    Ok(())
}

fn preprocess(a: PreprocessArgs) -> Result<()> {
    let raw = read_table(&a.components)?;
    let totals = raw.column(&a.total_column)?;
    let mass = raw.without(&[a.total_column.as_str()]);
    let x = mass.to_observed()?;
    let totals = DVector::from_iterator(
        totals.len(),
        totals.iter().map(|t| t.unwrap_or(f64::NAN)),
    );
    let logp = preprocess_components(&x, &totals)?;

    let gis = read_table(&a.sites)?.align_to(&raw.site_ids)?;
    let xi = gis.column_index("x")?;
    let yi = gis.column_index("y")?;
    let cov_idx: Vec<usize> = (0..gis.columns.len()).filter(|&j| j != xi && j != yi).collect();
    let n = gis.site_ids.len();
    let covars = DMatrix::from_fn(n, cov_idx.len(), |i, j| {
        gis.values[i][cov_idx[j]].unwrap_or(f64::NAN)
    });
    let land: Vec<&str> = a.land_use.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
    for l in &land {
        gis.column_index(l)?;
    }
    let flags: Vec<bool> = cov_idx.iter().map(|&j| land.contains(&gis.columns[j].as_str())).collect();
    let filtered = filter_gis_covariates(&covars, &flags)?;
    let pcs = gis_pca(&filtered.covars, a.n_pcs)?;

    std::fs::create_dir_all(&a.out)?;
    write_table(&a.out.join("components.csv"), &observed_table(&raw.site_ids, &mass.columns, &logp))?;
    let mut sites = DMatrix::zeros(n, 2 + a.n_pcs);
    for i in 0..n {
        for (c, idx) in [xi, yi].into_iter().enumerate() {
            sites[(i, c)] = gis.values[i][idx]
                .ok_or_else(|| Error::SchemaMismatch(format!("missing coordinate at `{}`", gis.site_ids[i])))?;
        }
    }
    sites.columns_mut(2, a.n_pcs).copy_from(&pcs);
    let mut cols = vec!["x".to_string(), "y".to_string()];
    cols.extend(names("gis_pc", a.n_pcs));
    write_table(&a.out.join("sites.csv"), &dense_table(&raw.site_ids, &cols, &sites))?;
    let mut w = csv::Writer::from_path(a.out.join("filter_report.csv"))?;
    w.write_record(["covariate", "status"])?;
    for (k, &j) in cov_idx.iter().enumerate() {
        let status = filtered
            .removed
            .iter()
            .find(|(c, _)| *c == k)
            .map_or("kept".to_string(), |(_, r)| r.to_string());
        w.write_record([gis.columns[j].as_str(), status.as_str()])?;
    }
    w.flush()?;
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Fit(a) => fit(a),
        Command::Predict(a) => predict(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Experiment(a) => experiment(a),
        Command::Loocv(a) => loocv(a),
        Command::Preprocess(a) => preprocess(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ Error::TooManyFailures { .. }) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
