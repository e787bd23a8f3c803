use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use super::{
    extract_components, fill_rank_one, initial_loading, mean_imputed, positive_variance, FitOptions,
};
use crate::data::{
    ComponentModel, LatentCovParams, Method, ObservedMatrix, ReductionResult, SiteFrame,
};
use crate::error::{Error, Result};
use crate::linalg::{
    cholesky_jitter, direction_change, least_squares, log_det, max_distance, median_pairwise,
    pairwise_distances, sample_variance, solve_lower_in_place, Chol,
};
use crate::optim::brent;

const JITTER: f64 = 1e-8;

/// Parameters of one ProPrPCA-Krige component:
/// `x_ij = u_i v_j + e_ij`, `u ~ N(R beta, sigma^2 exp(-D / phi))`, `e_ij ~ N(0, gamma^2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct KrigeParams {
    pub loading: DVector<f64>,
    pub beta: DVector<f64>,
    pub noise_var: f64,
    pub cov: LatentCovParams,
}

/// Gaussian posterior of the latent score given the observed entries.
#[derive(Debug, Clone)]
pub struct Posterior {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    /// Observed-data log-likelihood at the parameters used for the E-step.
    pub loglik: f64,
}

/// EM state for a single component.
#[derive(Debug, Clone)]
pub struct KrigeEm {
    x: ObservedMatrix,
    r: DMatrix<f64>,
    dist: DMatrix<f64>,
    phi_bounds: (f64, f64),
    params: KrigeParams,
}

impl KrigeEm {
    /// EM state at the given parameters. `mean_design` is the `n x r` matrix `R`.
    pub fn with_params(
        x: ObservedMatrix,
        mean_design: DMatrix<f64>,
        coords: &DMatrix<f64>,
        params: KrigeParams,
    ) -> Result<Self> {
        let n = x.nrows();
        if mean_design.nrows() != n || coords.nrows() != n || coords.ncols() != 2 {
            return Err(Error::DimensionMismatch(format!(
                "{n} rows of data, {} of mean design, {}x{} coordinates",
                mean_design.nrows(),
                coords.nrows(),
                coords.ncols()
            )));
        }
        if params.loading.len() != x.ncols() || params.beta.len() != mean_design.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "loading of length {} for {} columns, beta of length {} for {} covariates",
                params.loading.len(),
                x.ncols(),
                params.beta.len(),
                mean_design.ncols()
            )));
        }
        let dist = pairwise_distances(coords, coords);
        let maxd = max_distance(&dist);
        if !(maxd > 0.0) {
            return Err(Error::CovarianceSingular);
        }
        Ok(Self {
            x,
            r: mean_design,
            dist,
            phi_bounds: (1e-3 * maxd, 10.0 * maxd),
            params,
        })
    }

    /// Warm start: `v` from the SVD of the mean-imputed data, `beta` by least
    /// squares on the initial score, `sigma^2` = variance of that score and
    /// `phi` = median pairwise distance.
    pub fn initialize(
        x: ObservedMatrix,
        mean_design: DMatrix<f64>,
        coords: &DMatrix<f64>,
    ) -> Result<Self> {
        let v = initial_loading(&x)?;
        let u0 = mean_imputed(&x)? * &v;
        let beta = least_squares(&mean_design, &u0, 0.0)?;
        let rss: f64 = x
            .iter_observed()
            .map(|(i, j, val)| (val - u0[i] * v[j]).powi(2))
            .sum();
        let noise_var = positive_variance(rss, x.observed_count());
        let dist = pairwise_distances(coords, coords);
        let params = KrigeParams {
            loading: v,
            beta,
            noise_var,
            cov: LatentCovParams {
                partial_sill: sample_variance(&u0).max(f64::MIN_POSITIVE),
                range: median_pairwise(&dist),
            },
        };
        Self::with_params(x, mean_design, coords, params)
    }

    pub fn params(&self) -> &KrigeParams {
        &self.params
    }

    fn correlation(&self, phi: f64) -> DMatrix<f64> {
        self.dist.map(|d| (-d / phi).exp())
    }

    /// `d_i = sum v_j^2`, `b_i = sum x_ij v_j` over the observed `j` of row `i`.
    fn row_stats(&self) -> (DVector<f64>, DVector<f64>, DVector<f64>, Vec<usize>) {
        let n = self.x.nrows();
        let v = &self.params.loading;
        let mut d = DVector::zeros(n);
        let mut b = DVector::zeros(n);
        let mut xsq = DVector::zeros(n);
        let mut count = vec![0usize; n];
        for (i, j, val) in self.x.iter_observed() {
            d[i] += v[j] * v[j];
            b[i] += val * v[j];
            xsq[i] += val * val;
            count[i] += 1;
        }
        (d, b, xsq, count)
    }

    /// Posterior of `u` and the observed-data log-likelihood, through the
    /// well-conditioned form `B = I + W^1/2 Sigma W^1/2`, `W = diag(d) / gamma^2`.
    pub fn e_step(&self) -> Result<Posterior> {
        let n = self.x.nrows();
        let KrigeParams {
            beta,
            noise_var: g2,
            cov,
            ..
        } = &self.params;
        let (d, b, xsq, count) = self.row_stats();
        let mu = &self.r * beta;
        let sigma = self.correlation(cov.range) * cov.partial_sill;
        let sw = d.map(|di| (di / g2).sqrt());

        let mut bmat = DMatrix::from_fn(n, n, |i, j| sw[i] * sigma[(i, j)] * sw[j]);
        for i in 0..n {
            bmat[(i, i)] += 1.0;
        }
        let chol = cholesky_jitter(bmat, JITTER)?;
        let mut k = DMatrix::from_fn(n, n, |i, j| sw[i] * sigma[(i, j)]);
        solve_lower_in_place(chol.l_dirty(), &mut k);
        let s = &sigma - k.transpose() * &k;
        let resid = DVector::from_fn(n, |i, _| (b[i] - d[i] * mu[i]) / g2);
        let mean = &mu + &s * resid;

        let mut r_tilde = DVector::from_fn(n, |i, _| {
            if d[i] > 0.0 {
                (b[i] - d[i] * mu[i]) / (g2.sqrt() * d[i].sqrt())
            } else {
                0.0
            }
        });
        chol.l_dirty().solve_lower_triangular_mut(&mut r_tilde);
        let mut loglik = -0.5 * log_det(&chol) - 0.5 * r_tilde.norm_squared();
        for i in 0..n {
            let q = if d[i] > 0.0 {
                xsq[i] - b[i] * b[i] / d[i]
            } else {
                xsq[i]
            };
            loglik -= 0.5 * count[i] as f64 * (2.0 * PI * g2).ln() + 0.5 * q / g2;
        }
        Ok(Posterior {
            mean,
            cov: s,
            loglik,
        })
    }

    /// Generalized M-step: exact maximizers for `v`, `gamma^2`, `beta` and
    /// `sigma^2`; `phi` moves only when a bounded line search on `log phi`
    /// improves the profiled expected log-likelihood.
    pub fn m_step(&mut self, post: &Posterior) -> Result<()> {
        let p = self.x.ncols();
        let m = &post.mean;
        let s_diag = post.cov.diagonal();

        let mut c = DVector::zeros(p);
        let mut a = DVector::zeros(p);
        for (i, j, val) in self.x.iter_observed() {
            c[j] += val * m[i];
            a[j] += m[i] * m[i] + s_diag[i];
        }
        if let Some(v) = constrained_loading(&a, &c) {
            self.params.loading = v;
        }
        let v = &self.params.loading;
        let expected_rss: f64 = self
            .x
            .iter_observed()
            .map(|(i, j, val)| (val - m[i] * v[j]).powi(2) + v[j] * v[j] * s_diag[i])
            .sum();
        self.params.noise_var = positive_variance(expected_rss, self.x.observed_count());

        self.update_latent(post)
    }

    fn update_latent(&mut self, post: &Posterior) -> Result<()> {
        let n = self.x.nrows() as f64;
        // S = J J'; fall back to explicit inverses when S is numerically singular
        let s_factor = cholesky_jitter(post.cov.clone(), JITTER)
            .ok()
            .map(|c| c.unpack());
        let profile = |phi: f64| -> Result<(f64, DVector<f64>, f64)> {
            let chol = cholesky_jitter(self.correlation(phi), JITTER)?;
            let (beta, e) = gls(&chol, &self.r, &post.mean)?;
            let quad = e.dot(&chol.solve(&e));
            let trace = match &s_factor {
                Some(j) => {
                    let mut w = j.clone();
                    solve_lower_in_place(chol.l_dirty(), &mut w);
                    w.norm_squared()
                }
                None => chol.inverse().component_mul(&post.cov).sum(),
            };
            let sigma2 = ((quad + trace) / n).max(f64::MIN_POSITIVE);
            Ok((n * sigma2.ln() + log_det(&chol), beta, sigma2))
        };

        let phi0 = self.params.cov.range;
        let (f0, beta0, sigma0) = profile(phi0)?;
        let mut best = (phi0, f0, beta0, sigma0);
        let (lo, hi) = self.phi_bounds;
        let t0 = phi0.ln();
        let search = brent(
            |t| match profile(t.exp()) {
                Ok((f, beta, sigma2)) => {
                    if f < best.1 {
                        best = (t.exp(), f, beta, sigma2);
                    }
                    f
                }
                Err(_) => f64::INFINITY,
            },
            (t0 - 1.0).max(lo.ln()),
            (t0 + 1.0).min(hi.ln()),
            Some((t0, f0)),
            1e-3,
            10,
        );
        debug_assert!(search.value <= f0);
        let (phi, _, beta, sigma2) = best;
        self.params.beta = beta;
        self.params.cov = LatentCovParams {
            partial_sill: sigma2,
            range: phi,
        };
        Ok(())
    }
}

/// GLS coefficients and residual `e = m - R beta` under correlation `C`.
fn gls(chol: &Chol, r: &DMatrix<f64>, m: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
    let cinv_r = chol.solve(r);
    let gram = r.tr_mul(&cinv_r);
    let gchol = nalgebra::Cholesky::new(gram).ok_or(Error::SingularDesign)?;
    let beta = gchol.solve(&cinv_r.tr_mul(m));
    let e = m - r * &beta;
    Ok((beta, e))
}

/// Minimizer of `sum_j a_j v_j^2 - 2 c_j v_j` on the unit sphere (`a_j > 0`).
/// The solution is `v_j = c_j / (a_j - mu)` with the multiplier `mu` below
/// `min a_j` fixed by `|v| = 1`; `None` when `c = 0`.
fn constrained_loading(a: &DVector<f64>, c: &DVector<f64>) -> Option<DVector<f64>> {
    let cnorm = c.norm();
    if cnorm == 0.0 || !cnorm.is_finite() {
        return None;
    }
    let a_min = a.min();
    let scale = a.amax().max(cnorm);
    let flat = |j: usize| a[j] - a_min <= 1e-14 * scale;
    let secular = |mu: f64| -> f64 {
        c.iter()
            .zip(a.iter())
            .map(|(cj, aj)| (cj / (aj - mu)).powi(2))
            .sum::<f64>()
    };

    // hard case: no pull toward the flattest direction(s) and the rest is too short
    if (0..a.len()).filter(|&j| flat(j)).all(|j| c[j] == 0.0) {
        let partial: DVector<f64> =
            DVector::from_fn(
                a.len(),
                |j, _| if flat(j) { 0.0 } else { c[j] / (a[j] - a_min) },
            );
        let sq = partial.norm_squared();
        if sq <= 1.0 {
            let mut v = partial;
            let first = (0..a.len()).find(|&j| flat(j)).unwrap();
            v[first] = (1.0 - sq).sqrt();
            return Some(v.normalize());
        }
    }

    let (mut lo, mut hi) = (a_min - cnorm, a_min);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if secular(mid) > 1.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let v = DVector::from_fn(a.len(), |j, _| c[j] / (a[j] - lo));
    let norm = v.norm();
    (norm > 0.0 && norm.is_finite()).then(|| v / norm)
}

/// ProPrPCA-Krige: latent scores with a regression mean on `[1, covariates]`
/// and an exponential spatial covariance without nugget, fitted by EM on the
/// observed entries. `trace` records the observed-data log-likelihood at
/// every E-step.
pub fn proprpca_krige_fit(
    x: &ObservedMatrix,
    frame: &SiteFrame,
    opts: &FitOptions,
) -> Result<ReductionResult> {
    let n = x.nrows();
    if frame.n() != n {
        return Err(Error::DimensionMismatch(format!(
            "frame has {} sites, data has {n}",
            frame.n()
        )));
    }
    let k = frame.k();
    let r = DMatrix::from_fn(n, k + 1, |i, j| {
        if j == 0 {
            1.0
        } else {
            frame.covars()[(i, j - 1)]
        }
    });
    extract_components(x, opts, |xl, _| {
        let mut em = KrigeEm::initialize(xl.clone(), r.clone(), frame.coords())?;
        let mut trace = Vec::new();
        let mut converged = false;
        let mut iterations = 0;
        while iterations < opts.t_max {
            iterations += 1;
            let post = em.e_step()?;
            trace.push(post.loglik);
            let before = em.params.loading.clone();
            em.m_step(&post)?;
            if direction_change(&before, &em.params.loading) < opts.tol {
                converged = true;
                break;
            }
        }
        let post = em.e_step()?;
        trace.push(post.loglik);
        let KrigeParams {
            loading,
            beta,
            noise_var,
            cov,
        } = em.params;
        let filled = fill_rank_one(xl, &post.mean, &loading);
        Ok(ComponentModel {
            score: &filled * &loading,
            loading,
            coef: beta,
            noise_var,
            spatial_params: Some(cov),
            latent_mean: post.mean,
            method: Method::ProprKrige,
            converged,
            iterations,
            trace: if opts.trace { trace } else { Vec::new() },
        })
    })
}
