//! Exponential covariance and universal kriging of PC scores.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{cholesky_jitter, log_det, max_distance, pairwise_distances, Chol};
use crate::optim::{brent, nelder_mead};

/// `C(d) = sigma^2 exp(-d / phi) + tau^2 1{d = 0}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExponentialCovParams {
    pub partial_sill: f64,
    pub nugget: f64,
    pub range: f64,
}

impl ExponentialCovParams {
    pub fn new(partial_sill: f64, nugget: f64, range: f64) -> Result<Self> {
        if !(partial_sill >= 0.0 && nugget >= 0.0 && range > 0.0)
            || !(partial_sill.is_finite() && nugget.is_finite() && range.is_finite())
        {
            return Err(Error::InvalidConfig(format!(
                "invalid covariance parameters: sigma^2 = {partial_sill}, tau^2 = {nugget}, phi = {range}"
            )));
        }
        Ok(Self { partial_sill, nugget, range })
    }

    /// Covariance at distance `d`.
    pub fn at(&self, d: f64) -> f64 {
        let c = self.partial_sill * (-d / self.range).exp();
        if d == 0.0 {
            c + self.nugget
        } else {
            c
        }
    }
}

/// Cross-covariance between the rows of two coordinate matrices.
pub fn exp_cov_matrix(
    coords_a: &DMatrix<f64>,
    coords_b: &DMatrix<f64>,
    params: &ExponentialCovParams,
) -> DMatrix<f64> {
    pairwise_distances(coords_a, coords_b).map(|d| params.at(d))
}

/// Design for the kriging mean: `[1, x, y, covariates]`.
pub fn uk_design(coords: &DMatrix<f64>, covars: &DMatrix<f64>) -> DMatrix<f64> {
    let n = coords.nrows();
    DMatrix::from_fn(n, 3 + covars.ncols(), |i, j| match j {
        0 => 1.0,
        1 | 2 => coords[(i, j - 1)],
        _ => covars[(i, j - 3)],
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct UkOptions {
    /// Fix the nugget at zero (exact interpolation) instead of estimating it.
    pub zero_nugget: bool,
    /// Number of range values tried before the local search.
    pub starts: usize,
    pub max_evals: usize,
}

impl Default for UkOptions {
    fn default() -> Self {
        Self {
            zero_nugget: false,
            starts: 5,
            max_evals: 200,
        }
    }
}

/// A fitted universal-kriging model.
#[derive(Debug, Clone)]
pub struct KrigingModel {
    pub mean_coefs: DVector<f64>,
    pub cov: ExponentialCovParams,
    pub train_coords: DMatrix<f64>,
    pub train_design: DMatrix<f64>,
    /// Maximized log-likelihood.
    pub loglik: f64,
    /// Log-likelihoods at the multi-start points.
    pub start_logliks: Vec<f64>,
    /// Cholesky factor of `C(phi) + nu I` (covariance divided by `sigma^2`).
    chol: Chol,
    /// `(C + nu I)^-1 (y - X b)`.
    weights: DVector<f64>,
    /// Cholesky factor of `X' (C + nu I)^-1 X`.
    gls: Chol,
}

/// Profile fit at a fixed range and nugget-to-sill ratio `nu`.
struct Profile {
    loglik: f64,
    coefs: DVector<f64>,
    sigma2: f64,
    chol: Chol,
    weights: DVector<f64>,
    gls: Chol,
}

fn profile(
    y: &DVector<f64>,
    x: &DMatrix<f64>,
    dist: &DMatrix<f64>,
    phi: f64,
    nu: f64,
) -> Result<Profile> {
    let n = y.len();
    let mut k = dist.map(|d| (-d / phi).exp());
    for i in 0..n {
        k[(i, i)] += nu;
    }
    let chol = cholesky_jitter(k, 1e-10)?;
    let kinv_x = chol.solve(x);
    let gls = Cholesky::new(x.tr_mul(&kinv_x)).ok_or(Error::SingularDesign)?;
    let coefs = gls.solve(&kinv_x.tr_mul(y));
    let e = y - x * &coefs;
    let weights = chol.solve(&e);
    let floor = 1e-14 * y.norm_squared().max(1.0) / n as f64;
    let sigma2 = (e.dot(&weights) / n as f64).max(floor);
    let loglik = -0.5
        * (n as f64 * (2.0 * std::f64::consts::PI * sigma2).ln() + log_det(&chol) + n as f64);
    Ok(Profile {
        loglik,
        coefs,
        sigma2,
        chol,
        weights,
        gls,
    })
}

/// Profile log-likelihood at a given range and nugget-to-sill ratio, with the
/// mean coefficients and `sigma^2` at their maximizers.
pub fn uk_profile_loglik(
    score: &DVector<f64>,
    design: &DMatrix<f64>,
    coords: &DMatrix<f64>,
    range: f64,
    nugget_ratio: f64,
) -> Result<f64> {
    let dist = pairwise_distances(coords, coords);
    Ok(profile(score, design, &dist, range, nugget_ratio)?.loglik)
}

/// Maximum-likelihood universal kriging: `score ~ N(design b, Sigma)`, with
/// `b` by GLS, `sigma^2` analytic and `(phi, tau^2 / sigma^2)` searched on
/// the log scale from the best of several starting ranges.
pub fn uk_fit(
    score: &DVector<f64>,
    design: &DMatrix<f64>,
    coords: &DMatrix<f64>,
    opts: &UkOptions,
) -> Result<KrigingModel> {
    let (n, m) = (design.nrows(), design.ncols());
    if score.len() != n || coords.nrows() != n || coords.ncols() != 2 {
        return Err(Error::DimensionMismatch(format!(
            "{} scores, {n} design rows, {}x{} coordinates",
            score.len(),
            coords.nrows(),
            coords.ncols()
        )));
    }
    if n <= m + 3 {
        return Err(Error::RankDeficientDesign(n));
    }
    let sv = design.clone().singular_values();
    let (smax, smin) = (sv.max(), sv.min());
    if !(smin > 1e-10 * smax) {
        return Err(Error::RankDeficientDesign(n));
    }

    let dist = pairwise_distances(coords, coords);
    let maxd = max_distance(&dist);
    let (phi_lo, phi_hi) = ((1e-3 * maxd).ln(), (10.0 * maxd).ln());
    let (nu_lo, nu_hi) = (1e-6f64.ln(), 1e3f64.ln());
    let nu0: f64 = if opts.zero_nugget { 0.0 } else { 0.1 };
    let eval = |t: &[f64]| -> f64 {
        let nu = if opts.zero_nugget { 0.0 } else { t[1].exp() };
        match profile(score, design, &dist, t[0].exp(), nu) {
            Ok(p) if p.loglik.is_finite() => -p.loglik,
            _ => f64::INFINITY,
        }
    };

    let starts = opts.starts.max(1);
    let grid: Vec<f64> = (0..starts)
        .map(|s| {
            let frac = if starts == 1 { 0.5 } else { s as f64 / (starts - 1) as f64 };
            (0.02 * maxd).ln() + frac * (2.0f64.ln() - 0.02f64.ln())
        })
        .collect();
    let start_vals: Vec<f64> = grid.iter().map(|&t| eval(&[t, nu0.max(1e-300).ln()])).collect();
    let (best_idx, best_val) = start_vals
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, &v)| if v < acc.1 { (i, v) } else { acc });
    if !best_val.is_finite() {
        return Err(Error::OptimFailed("no finite likelihood at any starting range".into()));
    }

    let (phi, nu) = if opts.zero_nugget {
        let found = brent(
            |t| eval(&[t]),
            (grid[best_idx] - 1.5).max(phi_lo),
            (grid[best_idx] + 1.5).min(phi_hi),
            Some((grid[best_idx], best_val)),
            1e-6,
            opts.max_evals,
        );
        (found.x[0].exp(), 0.0)
    } else {
        let found = nelder_mead(
            eval,
            &[grid[best_idx], nu0.ln()],
            &[0.7, 1.5],
            &[phi_lo, nu_lo],
            &[phi_hi, nu_hi],
            opts.max_evals,
            1e-9,
        );
        (found.x[0].exp(), found.x[1].exp())
    };
    let fit = profile(score, design, &dist, phi, nu)?;
    Ok(KrigingModel {
        mean_coefs: fit.coefs,
        cov: ExponentialCovParams {
            partial_sill: fit.sigma2,
            nugget: nu * fit.sigma2,
            range: phi,
        },
        train_coords: coords.clone(),
        train_design: design.clone(),
        loglik: fit.loglik,
        start_logliks: start_vals.iter().map(|v| -v).collect(),
        chol: fit.chol,
        weights: fit.weights,
        gls: fit.gls,
    })
}

/// Kriging predictions and variances at new sites.
pub fn uk_predict(
    model: &KrigingModel,
    new_design: &DMatrix<f64>,
    new_coords: &DMatrix<f64>,
) -> Result<(DVector<f64>, DVector<f64>)> {
    if new_design.ncols() != model.train_design.ncols() {
        return Err(Error::SchemaMismatch(format!(
            "model uses {} mean columns, got {}",
            model.train_design.ncols(),
            new_design.ncols()
        )));
    }
    if new_coords.nrows() != new_design.nrows() || new_coords.ncols() != 2 {
        return Err(Error::DimensionMismatch(format!(
            "{} design rows, {}x{} coordinates",
            new_design.nrows(),
            new_coords.nrows(),
            new_coords.ncols()
        )));
    }
    let ExponentialCovParams { partial_sill: s2, nugget, range } = model.cov;
    let nu = if s2 > 0.0 { nugget / s2 } else { 0.0 };
    // cross-correlations in units of sigma^2; a coincident site picks up the nugget
    let c = pairwise_distances(&model.train_coords, new_coords)
        .map(|d| (-d / range).exp() + if d == 0.0 { nu } else { 0.0 });
    let mean = new_design * &model.mean_coefs + c.tr_mul(&model.weights);

    let kinv_c = model.chol.solve(&c);
    let kinv_x = model.chol.solve(&model.train_design);
    let mut var = DVector::zeros(new_design.nrows());
    for s in 0..new_design.nrows() {
        let cs = c.column(s);
        let simple = 1.0 + nu - cs.dot(&kinv_c.column(s));
        let g = new_design.row(s).transpose() - kinv_x.tr_mul(&cs);
        let drift = g.dot(&model.gls.solve(&g));
        var[s] = (s2 * (simple + drift)).max(0.0);
    }
    Ok((mean, var))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    #[test]
    fn covariance_formula() {
        let p = ExponentialCovParams::new(12.25, 1.0, 50.0).unwrap();
        assert_eq!(p.at(0.0), 13.25);
        assert!((p.at(50.0) - 12.25 * (-1.0f64).exp()).abs() < 1e-12);
        assert!((p.at(50.0) - 4.5065).abs() < 1e-4);
        assert!(p.at(40.0 * 50.0 + 1.0) < 1e-12);
        assert!(ExponentialCovParams::new(1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn covariance_matrix_symmetric_pd() {
        let coords = dmatrix![0.0, 0.0; 1.0, 0.0; 0.0, 1.0; 3.0, 2.0; 1.5, 1.5];
        let p = ExponentialCovParams::new(2.0, 0.0, 1.0).unwrap();
        let k = exp_cov_matrix(&coords, &coords, &p);
        assert!((&k - k.transpose()).amax() < 1e-12);
        assert!(Cholesky::new(k).is_some());
    }

    #[test]
    fn design_rank_checks() {
        let coords = DMatrix::from_fn(6, 2, |i, j| (i * (j + 1)) as f64);
        let design = uk_design(&coords, &DMatrix::zeros(6, 0));
        let y = DVector::from_element(6, 1.0);
        assert!(matches!(
            uk_fit(&y, &design, &coords, &UkOptions::default()),
            Err(Error::RankDeficientDesign(_))
        ));
    }

    fn fixture(n: usize, seed: u64) -> (DMatrix<f64>, DMatrix<f64>, DVector<f64>) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let coords = DMatrix::from_fn(n, 2, |_, _| rng.random::<f64>() * 20.0);
        let covars = DMatrix::from_fn(n, 1, |_, _| rng.random::<f64>() - 0.5);
        let design = uk_design(&coords, &covars);
        let y = DVector::from_fn(n, |i, _| {
            (coords[(i, 0)] / 4.0).sin() + 2.0 * covars[(i, 0)] + 0.3 * rng.random::<f64>()
        });
        (coords, design, y)
    }

    #[test]
    fn zero_nugget_interpolates() {
        let (coords, design, y) = fixture(30, 1);
        let opts = UkOptions { zero_nugget: true, ..UkOptions::default() };
        let model = uk_fit(&y, &design, &coords, &opts).unwrap();
        let (pred, var) = uk_predict(&model, &design, &coords).unwrap();
        assert!((pred - &y).amax() < 1e-6);
        assert!(var.amax() < 1e-6 * model.cov.partial_sill);
    }

    #[test]
    fn predictor_matches_gaussian_conditioning() {
        for seed in 0..3 {
            let (coords, design, y) = fixture(24, 10 + seed);
            let (train, new) = (0..20, 20..24);
            let model = uk_fit(
                &y.rows_range(train.clone()).into_owned(),
                &design.rows_range(train.clone()).into_owned(),
                &coords.rows_range(train.clone()).into_owned(),
                &UkOptions::default(),
            )
            .unwrap();
            let (pred, var) = uk_predict(
                &model,
                &design.rows_range(new.clone()).into_owned(),
                &coords.rows_range(new.clone()).into_owned(),
            )
            .unwrap();

            let full = exp_cov_matrix(&coords, &coords, &model.cov);
            let k = full.view((0, 0), (20, 20)).into_owned();
            let k0 = full.view((0, 20), (20, 4)).into_owned();
            let kinv = k.clone().try_inverse().unwrap();
            let x = design.rows(0, 20).into_owned();
            let x0 = design.rows(20, 4).into_owned();
            let a = (x.transpose() * &kinv * &x).try_inverse().unwrap();
            let b = &a * x.transpose() * &kinv * y.rows(0, 20);
            assert!((&b - &model.mean_coefs).amax() < 1e-8);
            let oracle = &x0 * &b + k0.transpose() * &kinv * (y.rows(0, 20) - &x * &b);
            assert!((&pred - &oracle).amax() < 1e-8, "{pred} vs {oracle}");
            for s in 0..4 {
                let c = k0.column(s);
                let g = x0.row(s).transpose() - x.transpose() * &kinv * c;
                let want = model.cov.at(0.0) - (c.transpose() * &kinv * c)[(0, 0)]
                    + (g.transpose() * &a * &g)[(0, 0)];
                assert!((var[s] - want).abs() < 1e-8 * want.max(1.0));
            }
        }
    }

    #[test]
    fn noiseless_regression_is_reproduced() {
        let (coords, design, _) = fixture(40, 3);
        let b = DVector::from_vec(vec![1.0, 0.2, -0.1, 3.0]);
        let y = &design * &b;
        let model = uk_fit(&y, &design, &coords, &UkOptions::default()).unwrap();
        assert!((&model.mean_coefs - &b).amax() < 1e-8);
        let new_coords = dmatrix![3.0, 4.0; 11.5, 0.5];
        let new_design = uk_design(&new_coords, &dmatrix![0.1; -0.3]);
        let (pred, _) = uk_predict(&model, &new_design, &new_coords).unwrap();
        assert!((pred - &new_design * &b).amax() < 1e-8);
    }

    #[test]
    fn search_never_loses_to_its_starts() {
        for seed in 0..4 {
            let (coords, design, y) = fixture(35, 20 + seed);
            let model = uk_fit(&y, &design, &coords, &UkOptions::default()).unwrap();
            let best = model.start_logliks.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            assert!(model.loglik >= best - 1e-10);
            let nu = model.cov.nugget / model.cov.partial_sill;
            let direct = uk_profile_loglik(&y, &design, &coords, model.cov.range, nu).unwrap();
            assert!((direct - model.loglik).abs() < 1e-8);
        }
    }
}
