//! Evaluation metrics for predicted scores and reconstructed test matrices.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

fn check_pair(u_true: &DVector<f64>, u_hat: &DVector<f64>) -> Result<()> {
    if u_true.len() != u_hat.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} true scores, {} predictions",
            u_true.len(),
            u_hat.len()
        )));
    }
    if u_true.len() < 3 {
        return Err(Error::DegenerateInput(format!("only {} points", u_true.len())));
    }
    Ok(())
}

fn centered_ss(x: &DVector<f64>) -> (DVector<f64>, f64) {
    let c = x.add_scalar(-x.mean());
    let ss = c.norm_squared();
    (c, ss)
}

/// Squared Pearson correlation between true and predicted scores.
pub fn prediction_r2(u_true: &DVector<f64>, u_hat: &DVector<f64>) -> Result<f64> {
    check_pair(u_true, u_hat)?;
    let (a, saa) = centered_ss(u_true);
    let (b, sbb) = centered_ss(u_hat);
    if !(saa > 0.0) || !(sbb > 0.0) {
        return Err(Error::DegenerateInput("constant score vector".into()));
    }
    let r = a.dot(&b) / (saa * sbb).sqrt();
    Ok((r * r).min(1.0))
}

/// `1 - MSE / Var(u_true)`; unlike [`prediction_r2`] this penalizes bias and
/// scale errors and can be negative.
pub fn mse_r2(u_true: &DVector<f64>, u_hat: &DVector<f64>) -> Result<f64> {
    check_pair(u_true, u_hat)?;
    let (_, saa) = centered_ss(u_true);
    if !(saa > 0.0) {
        return Err(Error::DegenerateInput("constant score vector".into()));
    }
    Ok(1.0 - (u_true - u_hat).norm_squared() / saa)
}

/// `|X_test - U_hat V_hat'|_F`.
pub fn reconstruction_error(
    x_test: &DMatrix<f64>,
    u_hat: &DMatrix<f64>,
    v_hat: &DMatrix<f64>,
) -> Result<f64> {
    if u_hat.nrows() != x_test.nrows()
        || v_hat.nrows() != x_test.ncols()
        || u_hat.ncols() != v_hat.ncols()
    {
        return Err(Error::DimensionMismatch(format!(
            "X is {:?}, U is {:?}, V is {:?}",
            x_test.shape(),
            u_hat.shape(),
            v_hat.shape()
        )));
    }
    Ok((x_test - u_hat * v_hat.transpose()).norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dmatrix, dvector};

    #[test]
    fn perfect_and_affine() {
        let u = dvector![1.0, -2.0, 0.5, 3.0];
        assert!((prediction_r2(&u, &u).unwrap() - 1.0).abs() < 1e-15);
        let v = u.map(|x| -3.0 * x + 7.0);
        assert!((prediction_r2(&u, &v).unwrap() - 1.0).abs() < 1e-12);
        assert!(mse_r2(&u, &v).unwrap() < 0.0);
    }

    #[test]
    fn degenerate_inputs() {
        let u = dvector![1.0, 2.0, 3.0];
        assert!(matches!(
            prediction_r2(&u, &dvector![1.0, 1.0, 1.0]),
            Err(Error::DegenerateInput(_))
        ));
        assert!(prediction_r2(&u, &dvector![1.0, 2.0]).is_err());
        assert!(prediction_r2(&dvector![1.0, 2.0], &dvector![1.0, 2.0]).is_err());
    }

    #[test]
    fn reconstruction_cases() {
        let u = dmatrix![1.0; 2.0; -1.0];
        let v = dmatrix![0.6; 0.8];
        let x = &u * v.transpose();
        assert!(reconstruction_error(&x, &u, &v).unwrap() < 1e-15);
        let zero = DMatrix::zeros(3, 1);
        assert!((reconstruction_error(&x, &zero, &v).unwrap() - x.norm()).abs() < 1e-15);
        assert!(reconstruction_error(&x, &zero, &dmatrix![1.0]).is_err());
    }
}
