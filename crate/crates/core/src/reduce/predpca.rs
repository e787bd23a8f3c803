use nalgebra::{Cholesky, DMatrix, DVector};

use super::{extract_components, initial_loading, positive_variance, FitOptions};
use crate::basis::DesignMatrix;
use crate::data::{ComponentModel, Method, ObservedMatrix, ReductionResult};
use crate::error::{Error, Result};
use crate::linalg::direction_change;

/// Predictive PCA: each score is constrained to the column space of `Z`.
///
/// Alternates `v <- X'u / |X'u|` with `u = Z alpha / |Z alpha|` and
/// `alpha <- (Z'Z + ridge I)^-1 Z' X v`. The stored score is the projection
/// `X v`; `coef` holds `alpha` and `latent_mean` holds `Z alpha`.
pub fn predpca_fit(
    x: &ObservedMatrix,
    z: &DesignMatrix,
    opts: &FitOptions,
) -> Result<ReductionResult> {
    if !x.is_complete() {
        return Err(Error::NotComplete);
    }
    if z.nrows() != x.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "design has {} rows, data has {}",
            z.nrows(),
            x.nrows()
        )));
    }
    let mut gram = z.z.tr_mul(&z.z);
    for i in 0..gram.nrows() {
        gram[(i, i)] += opts.ridge;
    }
    let chol = Cholesky::new(gram).ok_or(Error::SingularDesign)?;
    extract_components(x, opts, |xl, _| predpca_component(xl, &z.z, &chol, opts))
}

/// `|X|^2 - |X'u|^2` with `u = Z alpha / |Z alpha|`: the PredPCA loss once
/// `v` is optimized out.
pub fn predpca_objective(x: &DMatrix<f64>, z: &DMatrix<f64>, alpha: &DVector<f64>) -> f64 {
    let f = z * alpha;
    let norm = f.norm();
    if norm == 0.0 {
        return x.norm_squared();
    }
    x.norm_squared() - x.tr_mul(&(f / norm)).norm_squared()
}

fn predpca_component(
    xl: &ObservedMatrix,
    z: &DMatrix<f64>,
    chol: &Cholesky<f64, nalgebra::Dyn>,
    opts: &FitOptions,
) -> Result<ComponentModel> {
    let xd = xl.to_dense()?;
    let coef_for = |v: &DVector<f64>| chol.solve(&z.tr_mul(&(&xd * v)));
    let mut v = initial_loading(xl)?;
    let mut alpha = coef_for(&v);
    let mut converged = false;
    let mut iterations = 0;
    let mut trace = Vec::new();
    while iterations < opts.t_max {
        iterations += 1;
        let f = z * &alpha;
        let fnorm = f.norm();
        if fnorm == 0.0 {
            // X v is orthogonal to the design; nothing predictable is left
            converged = true;
            break;
        }
        let w = xd.tr_mul(&(f / fnorm));
        let wnorm = w.norm();
        if wnorm == 0.0 {
            converged = true;
            break;
        }
        let next = w / wnorm;
        let change = direction_change(&v, &next);
        v = next;
        alpha = coef_for(&v);
        if opts.trace {
            trace.push(predpca_objective(&xd, z, &alpha));
        }
        if change < opts.tol {
            converged = true;
            break;
        }
    }
    let score = &xd * &v;
    let rss = (&xd - &score * v.transpose()).norm_squared();
    Ok(ComponentModel {
        noise_var: positive_variance(rss, xd.len()),
        latent_mean: z * &alpha,
        score,
        loading: v,
        coef: alpha,
        spatial_params: None,
        method: Method::PredPca,
        converged,
        iterations,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn randn(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut rng))
    }

    fn centered(m: DMatrix<f64>) -> DMatrix<f64> {
        let means = m.row_mean();
        DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)] - means[j])
    }

    #[test]
    fn realizable_rank_one() {
        let z = centered(randn(40, 4, 1));
        let alpha0 = DVector::from_vec(vec![1.0, -2.0, 0.5, 0.0]);
        let f = &z * &alpha0;
        let v0 = DVector::from_vec(vec![3.0, 1.0, -2.0]).normalize();
        let x = ObservedMatrix::complete(&f * v0.transpose()).unwrap();
        let fit = predpca_fit(
            &x,
            &DesignMatrix::from_matrix(z.clone()),
            &FitOptions::default(),
        )
        .unwrap();
        let c = &fit.components[0];
        assert!(direction_change(&c.loading, &v0) < 1e-10);
        let cos = c.score.dot(&f) / (c.score.norm() * f.norm());
        assert!((cos.abs() - 1.0).abs() < 1e-10);
        let xc = x.to_dense().unwrap();
        assert!(predpca_objective(&xc, &z, &c.coef) < 1e-8 * xc.norm_squared());
    }

    #[test]
    fn objective_non_increasing() {
        let z = centered(randn(60, 5, 2));
        let x = ObservedMatrix::complete(randn(60, 6, 3)).unwrap();
        let opts = FitOptions {
            q: 3,
            trace: true,
            tol: 1e-12,
            ..Default::default()
        };
        let fit = predpca_fit(&x, &DesignMatrix::from_matrix(z), &opts).unwrap();
        for c in &fit.components {
            for w in c.trace.windows(2) {
                assert!(
                    w[1] <= w[0] + 1e-10 * w[0].abs().max(1.0),
                    "{} -> {}",
                    w[0],
                    w[1]
                );
            }
            assert!((c.loading.norm() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn rejects_missing_and_bad_design() {
        let x = ObservedMatrix::from_rows(&[
            vec![Some(1.0), None],
            vec![Some(2.0), Some(1.0)],
            vec![Some(0.0), Some(3.0)],
        ])
        .unwrap();
        let z = DesignMatrix::from_matrix(randn(3, 1, 4));
        assert!(matches!(
            predpca_fit(&x, &z, &FitOptions::default()),
            Err(Error::NotComplete)
        ));

        let x = ObservedMatrix::complete(randn(5, 2, 5)).unwrap();
        let z = DesignMatrix::from_matrix(randn(4, 2, 6));
        assert!(matches!(
            predpca_fit(&x, &z, &FitOptions::default()),
            Err(Error::DimensionMismatch(_))
        ));

        let col = randn(5, 1, 7);
        let z = DesignMatrix::from_matrix(DMatrix::from_fn(5, 2, |i, _| col[i]));
        let opts = FitOptions {
            ridge: 0.0,
            ..Default::default()
        };
        assert!(matches!(
            predpca_fit(&x, &z, &opts),
            Err(Error::SingularDesign)
        ));
    }
}
