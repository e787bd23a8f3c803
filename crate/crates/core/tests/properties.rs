use nalgebra::{DMatrix, DVector};
use proprpca::basis::build_design;
use proprpca::impute::{default_lambda_grid, soft_impute};
use proprpca::linalg::principal_angles;
use proprpca::metrics::{prediction_r2, reconstruction_error};
use proprpca::reduce::{
    fit_spline_complete, fit_spline_observed, pca_fit, predpca_fit, proprpca_krige_fit,
    proprpca_spline_fit, FitOptions,
};
use proprpca::{ObservedMatrix, SiteFrame};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn randn(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// Sites with two covariates and data driven by a smooth score plus noise.
fn instance(n: usize, p: usize, seed: u64) -> (DMatrix<f64>, SiteFrame) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coords = DMatrix::from_fn(n, 2, |_, _| rng.random::<f64>() * 20.0);
    let covars = randn(n, 2, &mut rng);
    let u = DVector::from_fn(n, |i, _| 2.0 * covars[(i, 0)] + (coords[(i, 0)] / 5.0).sin());
    let v = randn(p, 1, &mut rng).normalize();
    let x = &u * v.transpose() + randn(n, p, &mut rng);
    (x, SiteFrame::new(coords, covars).unwrap())
}

fn holes(x: &DMatrix<f64>, rate: f64, seed: u64) -> ObservedMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
    let p = x.ncols();
    // keep the diagonal-ish cell so rows and columns stay identifiable
    let mask = DMatrix::from_fn(x.nrows(), p, |i, j| j == i % p || rng.random::<f64>() >= rate);
    ObservedMatrix::new(x.clone(), mask).unwrap()
}

fn assert_unit(loadings: &DMatrix<f64>) -> Result<(), TestCaseError> {
    for c in loadings.column_iter() {
        prop_assert!((c.norm() - 1.0).abs() < 1e-10, "norm {}", c.norm());
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 100, ..ProptestConfig::default() })]

    #[test]
    fn loadings_have_unit_norm(n in 20usize..40, p in 3usize..6, seed in any::<u64>(), missing in prop::bool::ANY) {
        let (x, frame) = instance(n, p, seed);
        let opts = FitOptions::with_q(2);
        let complete = ObservedMatrix::complete(x.clone()).unwrap();
        let partial = if missing { holes(&x, 0.2, seed) } else { complete.clone() };
        let z = build_design(&frame, 5, seed).unwrap();
        assert_unit(&pca_fit(&complete, &opts).unwrap().loadings())?;
        assert_unit(&predpca_fit(&complete, &z, &opts).unwrap().loadings())?;
        assert_unit(&proprpca_spline_fit(&partial, &z, &opts).unwrap().loadings())?;
        assert_unit(&proprpca_krige_fit(&partial, &frame, &opts).unwrap().loadings())?;
    }

    #[test]
    fn pca_spans_leading_singular_vectors(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = DMatrix::from_diagonal(&DVector::from_fn(8, |j, _| 8.0 - j as f64));
        let x = randn(50, 8, &mut rng) * scale;
        let fit = pca_fit(&ObservedMatrix::complete(x.clone()).unwrap(), &FitOptions::with_q(3)).unwrap();
        let mut xc = x;
        for mut c in xc.column_iter_mut() {
            let m = c.mean();
            c.add_scalar_mut(-m);
        }
        let svd = xc.svd(false, true);
        let mut order: Vec<usize> = (0..8).collect();
        order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
        let vt = svd.v_t.unwrap();
        for l in 1..=3 {
            let oracle = DMatrix::from_fn(8, l, |j, k| vt[(order[k], j)]);
            let got = fit.loadings().columns(0, l).into_owned();
            let worst = principal_angles(&got, &oracle).into_iter().fold(0.0, f64::max);
            prop_assert!(worst < 1e-6, "angle {worst} at l = {l}");
        }
    }

    #[test]
    fn spline_paths_agree_on_full_mask(seed in any::<u64>()) {
        let (x, frame) = instance(35, 4, seed);
        let x = ObservedMatrix::complete(x).unwrap();
        let z = build_design(&frame, 4, seed).unwrap();
        let opts = FitOptions::with_q(2);
        let a = fit_spline_complete(&x, &z, &opts).unwrap();
        let b = fit_spline_observed(&x, &z, &opts).unwrap();
        prop_assert!((a.loadings() - b.loadings()).amax() < 1e-8);
        prop_assert!((a.scores() - b.scores()).amax() < 1e-8);
    }

    #[test]
    fn soft_impute_objective_never_increases(seed in any::<u64>(), k in 0usize..10) {
        let (x, _) = instance(30, 5, seed);
        let x = holes(&x, 0.3, seed);
        let lambda = default_lambda_grid(&x).unwrap()[k];
        let fit = soft_impute(&x, lambda, 5, 1e-12, 200).unwrap();
        for w in fit.objective.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-9, "{} -> {}", w[0], w[1]);
        }
        for (i, j, v) in x.iter_observed() {
            prop_assert_eq!(fit.filled[(i, j)], v);
        }
    }

    #[test]
    fn prediction_r2_is_affine_invariant(seed in any::<u64>(), a in -5.0f64..5.0, b in -10.0f64..10.0) {
        prop_assume!(a.abs() > 1e-3);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = randn(20, 1, &mut rng).column(0).into_owned();
        let h = &t + randn(20, 1, &mut rng).column(0) * 0.5;
        let base = prediction_r2(&t, &h).unwrap();
        let moved = h.map(|v| a * v + b);
        prop_assert!((prediction_r2(&t, &moved).unwrap() - base).abs() < 1e-10);
        prop_assert!((prediction_r2(&moved, &t).unwrap() - base).abs() < 1e-10);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&base));
    }

    #[test]
    fn pca_reconstruction_error_shrinks_with_q(seed in any::<u64>()) {
        let (x, _) = instance(30, 5, seed);
        let fit = pca_fit(&ObservedMatrix::complete(x.clone()).unwrap(), &FitOptions::with_q(5)).unwrap();
        let xc = fit.standardize(&x).unwrap();
        let (u, v) = (fit.scores(), fit.loadings());
        let mut last = f64::INFINITY;
        for q in 1..=5 {
            let re = reconstruction_error(&xc, &u.columns(0, q).into_owned(), &v.columns(0, q).into_owned()).unwrap();
            prop_assert!(re <= last + 1e-9);
            last = re;
        }
        prop_assert!(last < 1e-8);
    }
}
