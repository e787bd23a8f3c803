use nalgebra::DVector;

use super::{extract_components, initial_loading, positive_variance, FitOptions};
use crate::data::{ComponentModel, Method, ObservedMatrix, ReductionResult};
use crate::error::{Error, Result};
use crate::linalg::direction_change;

/// Ordinary PCA by rank-one alternating minimization of `||X - u v'||_F`
/// with `||v|| = 1`, deflating after each component.
pub fn pca_fit(x: &ObservedMatrix, opts: &FitOptions) -> Result<ReductionResult> {
    if !x.is_complete() {
        return Err(Error::NotComplete);
    }
    extract_components(x, opts, |xl, _| pca_component(xl, opts))
}

/// One rank-one PCA step on an (already centered) complete residual.
pub(crate) fn pca_component(xl: &ObservedMatrix, opts: &FitOptions) -> Result<ComponentModel> {
    let xd = xl.to_dense()?;
    let mut v = initial_loading(xl)?;
    let mut converged = false;
    let mut iterations = 0;
    let mut trace = Vec::new();
    while iterations < opts.t_max {
        iterations += 1;
        let u = &xd * &v;
        let w = xd.tr_mul(&u);
        let norm = w.norm();
        if norm == 0.0 {
            converged = true;
            break;
        }
        let next = w / norm;
        let change = direction_change(&v, &next);
        v = next;
        if opts.trace {
            let u = &xd * &v;
            trace.push(xd.norm_squared() - u.norm_squared());
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
        latent_mean: score.clone(),
        score,
        loading: v,
        coef: DVector::zeros(0),
        spatial_params: None,
        method: Method::Pca,
        converged,
        iterations,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::center_columns;
    use nalgebra::{dmatrix, DMatrix};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn axis_aligned_variance() {
        // rank-one step without centering
        let x = ObservedMatrix::complete(dmatrix![3.0, 0.0; 0.0, 1.0]).unwrap();
        let c = pca_component(&x, &FitOptions::default()).unwrap();
        assert!((c.loading[0].abs() - 1.0).abs() < 1e-12 && c.loading[1].abs() < 1e-12);
        assert!((c.score[0].abs() - 3.0).abs() < 1e-12 && c.score[1].abs() < 1e-12);

        // same geometry through the full fitter: already-centered columns
        let x =
            ObservedMatrix::complete(dmatrix![3.0, 0.0; -3.0, 0.0; 0.0, 1.0; 0.0, -1.0]).unwrap();
        let fit = pca_fit(&x, &FitOptions::with_q(2)).unwrap();
        let c = &fit.components[0];
        assert!((c.loading[0] - 1.0).abs() < 1e-12 && c.loading[1].abs() < 1e-12);
        assert!((&c.score - nalgebra::dvector![3.0, -3.0, 0.0, 0.0]).amax() < 1e-12);
    }

    #[test]
    fn rejects_missing_entries() {
        let x = ObservedMatrix::from_rows(&[
            vec![Some(1.0), None],
            vec![Some(2.0), Some(1.0)],
            vec![Some(0.0), Some(3.0)],
        ])
        .unwrap();
        assert!(matches!(
            pca_fit(&x, &FitOptions::default()),
            Err(Error::NotComplete)
        ));
    }

    #[test]
    fn two_components_leave_tail_energy() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let vals = DMatrix::from_fn(30, 6, |_, _| StandardNormal.sample(&mut rng));
        let x = ObservedMatrix::complete(vals).unwrap();
        let fit = pca_fit(&x, &FitOptions::with_q(2)).unwrap();
        let (xc, _) = center_columns(&x).unwrap();
        let xc = xc.to_dense().unwrap();
        let recon = fit.scores() * fit.loadings().transpose();
        let resid = (&xc - recon).norm();
        let sv = xc.singular_values();
        let mut s: Vec<f64> = sv.iter().copied().collect();
        s.sort_by(|a, b| b.total_cmp(a));
        let tail = s[2..].iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((resid - tail).abs() < 1e-8, "{resid} vs {tail}");
    }
}
