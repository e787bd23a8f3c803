//! Sequential rank-one reducers with deflation.
//!
//! Every fitter centers the data on observed entries, then for each
//! component `l` fits a rank-one model to the residual `X_l`, scores the
//! sites by projecting the (model-imputed) residual onto the loading, and
//! deflates the observed entries before moving on.

mod krige;
mod pca;
mod predpca;
mod spline;

pub use krige::{proprpca_krige_fit, KrigeEm, KrigeParams, Posterior};
pub use pca::pca_fit;
pub use predpca::{predpca_fit, predpca_objective};
pub use spline::{fit_spline_complete, fit_spline_observed, proprpca_spline_fit};

use nalgebra::{DMatrix, DVector};

use crate::data::{
    center_columns, deflate, standardize_columns, ComponentModel, ObservedMatrix, ReductionResult,
};
use crate::error::{Error, Result};
use crate::linalg::{canonical_sign, leading_right_singular};

/// Options shared by all reducers.
#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    /// Number of components to extract.
    pub q: usize,
    /// Maximum iterations per component.
    pub t_max: usize,
    /// Convergence threshold on `1 - |v_t . v_{t+1}|`.
    pub tol: f64,
    pub seed: u64,
    /// Ridge added to `Z'Z` in PredPCA.
    pub ridge: f64,
    /// Scale columns to unit variance after centering.
    pub scale: bool,
    /// Record the monitored objective at every iteration.
    pub trace: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            q: 1,
            t_max: 500,
            tol: 1e-6,
            seed: 0,
            ridge: 1e-8,
            scale: false,
            trace: false,
        }
    }
}

impl FitOptions {
    pub fn with_q(q: usize) -> Self {
        Self {
            q,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.q == 0 {
            return Err(Error::InvalidConfig("q must be at least 1".into()));
        }
        if self.t_max == 0 {
            return Err(Error::InvalidConfig("t_max must be at least 1".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidConfig("tol must be positive".into()));
        }
        if !(self.ridge >= 0.0) {
            return Err(Error::InvalidConfig("ridge must be non-negative".into()));
        }
        Ok(())
    }
}

/// Fills missing cells with `latent_mean_i * v_j`; observed cells are kept.
pub fn model_impute(
    x: &ObservedMatrix,
    comp: &ComponentModel,
    latent_mean: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    if latent_mean.len() != x.nrows() || comp.loading.len() != x.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "cannot impute {}x{} from latent mean of length {} and loading of length {}",
            x.nrows(),
            x.ncols(),
            latent_mean.len(),
            comp.loading.len()
        )));
    }
    Ok(fill_rank_one(x, latent_mean, &comp.loading))
}

pub(crate) fn fill_rank_one(
    x: &ObservedMatrix,
    u: &DVector<f64>,
    v: &DVector<f64>,
) -> DMatrix<f64> {
    x.filled_with(|i, j| u[i] * v[j])
}

/// Residual matrix with missing cells replaced by the observed column means.
pub(crate) fn mean_imputed(x: &ObservedMatrix) -> Result<DMatrix<f64>> {
    let means = x.observed_column_means()?;
    Ok(x.filled_with(|_, j| means[j]))
}

/// Leading right singular vector of the mean-imputed residual.
pub(crate) fn initial_loading(x: &ObservedMatrix) -> Result<DVector<f64>> {
    Ok(leading_right_singular(&mean_imputed(x)?))
}

pub(crate) fn positive_variance(rss: f64, count: usize) -> f64 {
    (rss / count as f64).max(f64::MIN_POSITIVE)
}

/// Centers (and optionally scales) `x`, then runs `fit_one` on each
/// successive residual. `fit_one` returns a component whose score is the
/// projection used for deflation; the driver fixes the sign convention.
pub(crate) fn extract_components<F>(
    x: &ObservedMatrix,
    opts: &FitOptions,
    mut fit_one: F,
) -> Result<ReductionResult>
where
    F: FnMut(&ObservedMatrix, usize) -> Result<ComponentModel>,
{
    opts.validate()?;
    if opts.q > x.ncols() {
        return Err(Error::InvalidConfig(format!(
            "q = {} exceeds the {} available columns",
            opts.q,
            x.ncols()
        )));
    }
    let (mut residual, column_means, column_scales) = if opts.scale {
        let (s, m, sc) = standardize_columns(x)?;
        (s, m, Some(sc))
    } else {
        let (c, m) = center_columns(x)?;
        (c, m, None)
    };
    let mut components = Vec::with_capacity(opts.q);
    for l in 0..opts.q {
        let mut comp = fit_one(&residual, l)?;
        let sign = canonical_sign(&comp.loading);
        if sign < 0.0 {
            comp.loading.neg_mut();
            comp.score.neg_mut();
            comp.coef.neg_mut();
            comp.latent_mean.neg_mut();
        }
        if !comp.converged {
            log::warn!(
                "{} component {} stopped after {} iterations without converging",
                comp.method,
                l + 1,
                comp.iterations
            );
        }
        residual = deflate(&residual, &comp.score, &comp.loading)?;
        components.push(comp);
    }
    Ok(ReductionResult {
        components,
        column_means,
        column_scales,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Method;
    use nalgebra::{dmatrix, dvector};

    fn comp(loading: DVector<f64>) -> ComponentModel {
        let n = 3;
        ComponentModel {
            loading,
            score: DVector::zeros(n),
            coef: DVector::zeros(0),
            noise_var: 1.0,
            spatial_params: None,
            latent_mean: DVector::zeros(n),
            method: Method::ProprSpline,
            converged: true,
            iterations: 1,
            trace: vec![],
        }
    }

    #[test]
    fn impute_identity_on_complete() {
        let vals = dmatrix![1.0, 2.0; 3.0, 4.0; 5.0, 7.0];
        let x = ObservedMatrix::complete(vals.clone()).unwrap();
        let out = model_impute(&x, &comp(dvector![0.6, 0.8]), &dvector![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(out, vals);
    }

    #[test]
    fn impute_full_row_and_mixed() {
        let x = ObservedMatrix::from_rows(&[
            vec![Some(1.0), None],
            vec![Some(2.0), Some(5.0)],
            vec![None, Some(-1.0)],
            vec![Some(0.5), Some(0.0)],
        ])
        .unwrap();
        let v = dvector![0.6, 0.8];
        let m = dvector![10.0, 20.0, 30.0, 40.0];
        let mut c = comp(v.clone());
        c.score = DVector::zeros(4);
        let out = model_impute(&x, &c, &m).unwrap();
        let want = dmatrix![1.0, 10.0 * 0.8; 2.0, 5.0; 30.0 * 0.6, -1.0; 0.5, 0.0];
        assert!((out - want).amax() < 1e-14);
    }

    #[test]
    fn impute_rejects_bad_lengths() {
        let x = ObservedMatrix::complete(DMatrix::zeros(3, 2)).unwrap();
        assert!(model_impute(&x, &comp(dvector![1.0, 0.0]), &dvector![1.0]).is_err());
    }

    #[test]
    fn options_validation() {
        assert!(FitOptions::default().validate().is_ok());
        assert!(FitOptions {
            q: 0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(FitOptions {
            tol: 0.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(FitOptions {
            t_max: 0,
            ..Default::default()
        }
        .validate()
        .is_err());
    }
}
