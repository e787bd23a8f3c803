//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

pub type Chol = Cholesky<f64, Dyn>;

/// Euclidean distances between the rows of two `? x 2` coordinate matrices.
pub fn pairwise_distances(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), b.nrows(), |i, j| {
        let dx = a[(i, 0)] - b[(j, 0)];
        let dy = a[(i, 1)] - b[(j, 1)];
        (dx * dx + dy * dy).sqrt()
    })
}

/// Largest entry of a symmetric distance matrix.
pub fn max_distance(d: &DMatrix<f64>) -> f64 {
    d.iter().copied().fold(0.0, f64::max)
}

/// Median of the strictly upper-triangular entries.
pub fn median_pairwise(d: &DMatrix<f64>) -> f64 {
    let n = d.nrows();
    let mut vals = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for j in 1..n {
        for i in 0..j {
            vals.push(d[(i, j)]);
        }
    }
    median(&mut vals)
}

pub fn median(vals: &mut [f64]) -> f64 {
    if vals.is_empty() {
        return f64::NAN;
    }
    vals.sort_by(f64::total_cmp);
    let m = vals.len() / 2;
    if vals.len() % 2 == 1 {
        vals[m]
    } else {
        0.5 * (vals[m - 1] + vals[m])
    }
}

/// Sample quantile with linear interpolation between order statistics.
pub fn quantile(vals: &[f64], prob: f64) -> f64 {
    let mut v = vals.to_vec();
    v.sort_by(f64::total_cmp);
    let h = (v.len() as f64 - 1.0) * prob.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

/// Cholesky factorization; on failure retries once with `jitter` times the
/// mean diagonal added to the diagonal.
pub fn cholesky_jitter(m: DMatrix<f64>, jitter: f64) -> Result<Chol> {
    match Cholesky::new(m.clone()) {
        Some(c) => Ok(c),
        None => {
            let scale = m.diagonal().mean().abs().max(1.0);
            let mut m = m;
            for i in 0..m.nrows() {
                m[(i, i)] += jitter * scale;
            }
            Cholesky::new(m).ok_or(Error::CovarianceSingular)
        }
    }
}

pub fn log_det(chol: &Chol) -> f64 {
    2.0 * chol
        .l_dirty()
        .diagonal()
        .iter()
        .map(|d| d.ln())
        .sum::<f64>()
}

/// Solves `(A'A + ridge I) x = A'y`.
pub fn least_squares(a: &DMatrix<f64>, y: &DVector<f64>, ridge: f64) -> Result<DVector<f64>> {
    let mut gram = a.tr_mul(a);
    for i in 0..gram.nrows() {
        gram[(i, i)] += ridge;
    }
    let chol = Cholesky::new(gram).ok_or(Error::SingularDesign)?;
    Ok(chol.solve(&a.tr_mul(y)))
}

/// Leading right singular vector of a dense matrix.
pub fn leading_right_singular(x: &DMatrix<f64>) -> DVector<f64> {
    let svd = x.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let (idx, _) =
        svd.singular_values
            .iter()
            .enumerate()
            .fold(
                (0, f64::NEG_INFINITY),
                |acc, (i, &s)| if s > acc.1 { (i, s) } else { acc },
            );
    v_t.row(idx).transpose()
}

/// Sign making the largest-magnitude entry positive (first one on ties).
pub fn canonical_sign(v: &DVector<f64>) -> f64 {
    let mut best = 0.0f64;
    for &x in v.iter() {
        if x.abs() > best.abs() {
            best = x;
        }
    }
    if best < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// `1 - |a . b|` for unit vectors.
pub fn direction_change(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (1.0 - a.dot(b).abs()).max(0.0)
}

pub fn sample_variance(x: &DVector<f64>) -> f64 {
    let n = x.len() as f64;
    let mean = x.mean();
    x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
}

/// Overwrites `b` with `L^-1 b` for lower-triangular `l`, in row blocks so
/// the bulk of the work is a matrix product.
pub fn solve_lower_in_place(l: &DMatrix<f64>, b: &mut DMatrix<f64>) {
    const NB: usize = 64;
    let (n, m) = (l.nrows(), b.ncols());
    let mut k0 = 0;
    while k0 < n {
        let nb = NB.min(n - k0);
        if k0 > 0 {
            let update = l.view((k0, 0), (nb, k0)) * b.view((0, 0), (k0, m));
            let mut rows = b.view_mut((k0, 0), (nb, m));
            rows -= update;
        }
        let diag = l.view((k0, k0), (nb, nb)).into_owned();
        let mut rows = b.view_mut((k0, 0), (nb, m));
        diag.solve_lower_triangular_mut(&mut rows);
        k0 += nb;
    }
}

/// Principal angles (radians) between the column spaces of two matrices.
pub fn principal_angles(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Vec<f64> {
    let qa = a.clone().qr().q();
    let qb = b.clone().qr().q();
    let m = qa.tr_mul(&qb);
    m.singular_values()
        .iter()
        .map(|s| {
            let s = s.clamp(-1.0, 1.0);
            // acos is ill-conditioned near 1; use the sine form instead.
            (1.0 - s * s).max(0.0).sqrt().asin()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    #[test]
    fn quantile_interpolates() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile(&v, 0.5), 3.0);
        assert!((quantile(&v, 0.8) - 4.2).abs() < 1e-12);
        assert_eq!(quantile(&v, 1.0), 5.0);
    }

    #[test]
    fn sign_convention() {
        assert_eq!(canonical_sign(&dvector![0.1, -0.9, 0.3]), -1.0);
        assert_eq!(canonical_sign(&dvector![0.1, 0.9, -0.3]), 1.0);
    }

    #[test]
    fn angles_of_identical_subspaces_vanish() {
        let a = DMatrix::from_fn(6, 2, |i, j| ((i + 2 * j) as f64).cos());
        let b = &a * nalgebra::dmatrix![2.0, 1.0; -1.0, 3.0];
        for t in principal_angles(&a, &b) {
            assert!(t < 1e-7);
        }
    }

    #[test]
    fn blocked_solve_matches_unblocked() {
        let n = 150;
        let a = DMatrix::from_fn(n, n, |i, j| (-((i as f64 - j as f64).abs()) / 20.0).exp());
        let chol = cholesky_jitter(a, 1e-10).unwrap();
        let l = chol.l();
        let b = DMatrix::from_fn(n, 7, |i, j| ((i * 3 + j) as f64).sin());
        let mut fast = b.clone();
        solve_lower_in_place(&l, &mut fast);
        assert!((&l * &fast - &b).amax() < 1e-10);
    }

    #[test]
    fn jitter_rescues_semidefinite() {
        let m = DMatrix::from_element(3, 3, 1.0);
        assert!(cholesky_jitter(m, 1e-8).is_ok());
        let bad = -DMatrix::<f64>::identity(2, 2);
        assert!(matches!(
            cholesky_jitter(bad, 1e-8),
            Err(Error::CovarianceSingular)
        ));
    }
}
