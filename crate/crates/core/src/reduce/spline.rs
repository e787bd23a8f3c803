use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::{extract_components, fill_rank_one, initial_loading, positive_variance, FitOptions};
use crate::basis::DesignMatrix;
use crate::data::{ComponentModel, Method, ObservedMatrix, ReductionResult};
use crate::error::{Error, Result};
use crate::linalg::direction_change;

/// ProPrPCA-Spline: `X_l = (Z beta) v' + E` with iid Gaussian noise, fitted
/// on the observed entries. Complete data takes the closed-form path,
/// anything else the observed-entries path.
pub fn proprpca_spline_fit(
    x: &ObservedMatrix,
    z: &DesignMatrix,
    opts: &FitOptions,
) -> Result<ReductionResult> {
    if x.is_complete() {
        fit_spline_complete(x, z, opts)
    } else {
        fit_spline_observed(x, z, opts)
    }
}

/// Complete-data updates:
/// `v ~ X'Z beta / |Z beta|^2`, `beta = (Z'Z)^-1 Z'X v`, `gamma^2 = RSS / (np)`.
pub fn fit_spline_complete(
    x: &ObservedMatrix,
    z: &DesignMatrix,
    opts: &FitOptions,
) -> Result<ReductionResult> {
    if !x.is_complete() {
        return Err(Error::NotComplete);
    }
    check_rows(x, z)?;
    let chol = Cholesky::new(z.z.tr_mul(&z.z)).ok_or(Error::SingularDesign)?;
    extract_components(x, opts, |xl, _| complete_component(xl, &z.z, &chol, opts))
}

/// Observed-entries updates, valid for any mask:
/// `v_j ~ sum_i x_ij f_i / sum_i f_i^2` over observed `i`, then `beta`
/// from the weighted normal equations `sum_i d_i z_i z_i' beta = sum_i b_i z_i`
/// with `d_i = sum_j v_j^2`, `b_i = sum_j x_ij v_j` over observed `j`.
pub fn fit_spline_observed(
    x: &ObservedMatrix,
    z: &DesignMatrix,
    opts: &FitOptions,
) -> Result<ReductionResult> {
    check_rows(x, z)?;
    extract_components(x, opts, |xl, _| observed_component(xl, &z.z, opts))
}

fn check_rows(x: &ObservedMatrix, z: &DesignMatrix) -> Result<()> {
    if z.nrows() != x.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "design has {} rows, data has {}",
            z.nrows(),
            x.nrows()
        )));
    }
    Ok(())
}

fn complete_component(
    xl: &ObservedMatrix,
    z: &DMatrix<f64>,
    chol: &Cholesky<f64, Dyn>,
    opts: &FitOptions,
) -> Result<ComponentModel> {
    let xd = xl.to_dense()?;
    let np = xd.len();
    let beta_for = |v: &DVector<f64>| chol.solve(&z.tr_mul(&(&xd * v)));
    let rss = |f: &DVector<f64>, v: &DVector<f64>| (&xd - f * v.transpose()).norm_squared();

    let mut v = initial_loading(xl)?;
    let mut beta = beta_for(&v);
    let mut f = z * &beta;
    let mut gamma2 = positive_variance(rss(&f, &v), np);
    let mut converged = false;
    let mut iterations = 0;
    let mut trace = Vec::new();
    while iterations < opts.t_max {
        iterations += 1;
        let fsq = f.norm_squared();
        if fsq == 0.0 {
            converged = true;
            break;
        }
        let v_tilde = xd.tr_mul(&f) / fsq;
        let vnorm = v_tilde.norm();
        if vnorm == 0.0 {
            converged = true;
            break;
        }
        let next = v_tilde / vnorm;
        let change = direction_change(&v, &next);
        v = next;
        beta = beta_for(&v);
        f = z * &beta;
        gamma2 = positive_variance(rss(&f, &v), np);
        if opts.trace {
            trace.push(gamma2);
        }
        if change < opts.tol {
            converged = true;
            break;
        }
    }
    Ok(ComponentModel {
        score: &xd * &v,
        loading: v,
        coef: beta,
        noise_var: gamma2,
        spatial_params: None,
        latent_mean: f,
        method: Method::ProprSpline,
        converged,
        iterations,
        trace,
    })
}

/// `sum_(i,j) obs (x_ij - f_i v_j)^2`.
fn observed_rss(x: &ObservedMatrix, f: &DVector<f64>, v: &DVector<f64>) -> f64 {
    x.iter_observed()
        .map(|(i, j, val)| {
            let r = val - f[i] * v[j];
            r * r
        })
        .sum()
}

/// Weighted least squares for `beta` given `v` on the observed entries.
fn observed_beta(x: &ObservedMatrix, z: &DMatrix<f64>, v: &DVector<f64>) -> Result<DVector<f64>> {
    let (n, m) = (x.nrows(), z.ncols());
    let mut d = DVector::zeros(n);
    let mut b = DVector::zeros(n);
    for (i, j, val) in x.iter_observed() {
        d[i] += v[j] * v[j];
        b[i] += val * v[j];
    }
    let mut zd = z.clone();
    for i in 0..n {
        zd.row_mut(i).scale_mut(d[i]);
    }
    let gram = z.tr_mul(&zd);
    debug_assert_eq!(gram.nrows(), m);
    let chol = Cholesky::new(gram).ok_or(Error::SingularDesign)?;
    Ok(chol.solve(&z.tr_mul(&b)))
}

fn observed_component(
    xl: &ObservedMatrix,
    z: &DMatrix<f64>,
    opts: &FitOptions,
) -> Result<ComponentModel> {
    let p = xl.ncols();
    let count = xl.observed_count();
    let mut v = initial_loading(xl)?;
    let mut beta = observed_beta(xl, z, &v)?;
    let mut f = z * &beta;
    let mut gamma2 = positive_variance(observed_rss(xl, &f, &v), count);
    let mut converged = false;
    let mut iterations = 0;
    let mut trace = Vec::new();
    while iterations < opts.t_max {
        iterations += 1;
        let mut num = DVector::<f64>::zeros(p);
        let mut den = DVector::<f64>::zeros(p);
        for (i, j, val) in xl.iter_observed() {
            num[j] += val * f[i];
            den[j] += f[i] * f[i];
        }
        let v_tilde = DVector::from_fn(p, |j, _| if den[j] > 0.0 { num[j] / den[j] } else { 0.0 });
        let vnorm = v_tilde.norm();
        if vnorm == 0.0 {
            converged = true;
            break;
        }
        let next = v_tilde / vnorm;
        let change = direction_change(&v, &next);
        v = next;
        beta = observed_beta(xl, z, &v)?;
        f = z * &beta;
        gamma2 = positive_variance(observed_rss(xl, &f, &v), count);
        if opts.trace {
            trace.push(gamma2);
        }
        if change < opts.tol {
            converged = true;
            break;
        }
    }
    let filled = fill_rank_one(xl, &f, &v);
    Ok(ComponentModel {
        score: &filled * &v,
        loading: v,
        coef: beta,
        noise_var: gamma2,
        spatial_params: None,
        latent_mean: f,
        method: Method::ProprSpline,
        converged,
        iterations,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn randn(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
    }

    fn centered(m: DMatrix<f64>) -> DMatrix<f64> {
        let means = m.row_mean();
        DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)] - means[j])
    }

    /// `(Z kron v)' vec(X)` with `vec` stacking the rows of `X`, built explicitly.
    fn kron_form(z: &DMatrix<f64>, v: &DVector<f64>, x: &DMatrix<f64>) -> DVector<f64> {
        let (n, m, p) = (z.nrows(), z.ncols(), v.len());
        let kron = DMatrix::from_fn(n * p, m, |r, c| z[(r / p, c)] * v[r % p]);
        let vec_x = DVector::from_fn(n * p, |r, _| x[(r / p, r % p)]);
        kron.tr_mul(&vec_x)
    }

    #[test]
    fn kronecker_form_equals_simplified() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let z = randn(7, 3, &mut rng);
        let x = randn(7, 4, &mut rng);
        let v = randn(4, 1, &mut rng).column(0).normalize();
        let simple = z.tr_mul(&(&x * &v));
        assert!((kron_form(&z, &v, &x) - simple).amax() < 1e-12);
    }

    #[test]
    fn realizable_noiseless() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let z = centered(randn(50, 4, &mut rng));
        let beta0 = DVector::from_vec(vec![2.0, -1.0, 0.0, 0.5]);
        let v0 = DVector::from_vec(vec![0.2, -0.7, 0.4, 0.3, 0.1]).normalize();
        let x = ObservedMatrix::complete(&z * &beta0 * v0.transpose()).unwrap();
        let fit =
            fit_spline_complete(&x, &DesignMatrix::from_matrix(z), &FitOptions::default()).unwrap();
        let c = &fit.components[0];
        assert!(direction_change(&c.loading, &v0) < 1e-12);
        assert!(c.noise_var < 1e-20);
    }

    #[test]
    fn gamma_is_mean_squared_residual_and_non_increasing() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let z = centered(randn(80, 6, &mut rng));
        let x = ObservedMatrix::complete(randn(80, 5, &mut rng)).unwrap();
        let opts = FitOptions {
            q: 2,
            trace: true,
            tol: 1e-12,
            ..Default::default()
        };
        let fit = fit_spline_complete(&x, &DesignMatrix::from_matrix(z.clone()), &opts).unwrap();
        let c = &fit.components[0];
        for w in c.trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-10, "{} -> {}", w[0], w[1]);
        }
        let (xc, _) = crate::data::center_columns(&x).unwrap();
        let xc = xc.to_dense().unwrap();
        let resid = &xc - (&z * &c.coef) * c.loading.transpose();
        assert!((resid.norm_squared() / xc.len() as f64 - c.noise_var).abs() < 1e-12);
    }

    #[test]
    fn observed_path_matches_complete_path_on_full_mask() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let z = DesignMatrix::from_matrix(centered(randn(60, 5, &mut rng)));
        let x = ObservedMatrix::complete(randn(60, 4, &mut rng)).unwrap();
        let opts = FitOptions::with_q(3);
        let a = fit_spline_complete(&x, &z, &opts).unwrap();
        let b = fit_spline_observed(&x, &z, &opts).unwrap();
        for (ca, cb) in a.components.iter().zip(&b.components) {
            assert!((&ca.loading - &cb.loading).amax() < 1e-8);
            assert!((&ca.coef - &cb.coef).amax() < 1e-8);
            assert!((&ca.score - &cb.score).amax() < 1e-8);
            assert!((ca.noise_var - cb.noise_var).abs() < 1e-8);
        }
    }

    #[test]
    fn missing_path_monotone_and_unit_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let zm = centered(randn(70, 4, &mut rng));
        let u = &zm * DVector::from_vec(vec![1.0, 0.5, -1.0, 0.2]);
        let v0 = DVector::from_vec(vec![0.5, 0.5, -0.5, 0.5]);
        let vals = &u * v0.transpose() + randn(70, 4, &mut rng) * 0.3;
        let mask = DMatrix::from_fn(70, 4, |i, j| rng.random::<f64>() > 0.3 || j == i % 4);
        let x = ObservedMatrix::complete(vals)
            .unwrap()
            .mask_more(|i, j| !mask[(i, j)])
            .unwrap();
        let opts = FitOptions {
            q: 2,
            trace: true,
            tol: 1e-12,
            ..Default::default()
        };
        let fit = proprpca_spline_fit(&x, &DesignMatrix::from_matrix(zm), &opts).unwrap();
        for c in &fit.components {
            assert!((c.loading.norm() - 1.0).abs() < 1e-10);
            for w in c.trace.windows(2) {
                assert!(w[1] <= w[0] + 1e-10, "{} -> {}", w[0], w[1]);
            }
        }
        assert!(direction_change(&fit.components[0].loading, &v0) < 0.01);
    }
}
