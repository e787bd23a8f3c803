//! Thin-plate spline basis and the design matrix `Z = [R  R~]`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{find_duplicate_rows, SiteFrame};
use crate::error::{Error, Result};
use crate::linalg::pairwise_distances;

/// Default number of spline columns.
pub const DEFAULT_K_TILDE: usize = 10;

const MAX_LLOYD_ITERS: usize = 200;

/// Covariates and spline columns, standardized, plus what is needed to
/// rebuild the same columns at new sites.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub z: DMatrix<f64>,
    pub k: usize,
    pub k_tilde: usize,
    pub knots: DMatrix<f64>,
    col_means: DVector<f64>,
    col_sds: DVector<f64>,
}

impl DesignMatrix {
    /// Wraps an already assembled matrix (no spline columns, no standardization).
    pub fn from_matrix(z: DMatrix<f64>) -> Self {
        let m = z.ncols();
        Self {
            k: m,
            k_tilde: 0,
            knots: DMatrix::zeros(0, 2),
            col_means: DVector::zeros(m),
            col_sds: DVector::from_element(m, 1.0),
            z,
        }
    }

    pub fn nrows(&self) -> usize {
        self.z.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.z.ncols()
    }

    pub fn col_means(&self) -> &DVector<f64> {
        &self.col_means
    }

    pub fn col_sds(&self) -> &DVector<f64> {
        &self.col_sds
    }
}

/// `r^2 log r`, continuous at zero.
#[inline]
pub fn tps_radial(r: f64) -> f64 {
    if r <= 0.0 {
        0.0
    } else {
        r * r * r.ln()
    }
}

/// Seeded k-means (k-means++ seeding, then Lloyd iterations) on coordinates.
pub fn select_knots(coords: &DMatrix<f64>, k_tilde: usize, seed: u64) -> Result<DMatrix<f64>> {
    let n = coords.nrows();
    if k_tilde > n {
        return Err(Error::TooManyKnots {
            requested: k_tilde,
            available: n,
        });
    }
    if k_tilde == 0 {
        return Ok(DMatrix::zeros(0, 2));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sq = |i: usize, c: &DMatrix<f64>, j: usize| {
        let dx = coords[(i, 0)] - c[(j, 0)];
        let dy = coords[(i, 1)] - c[(j, 1)];
        dx * dx + dy * dy
    };

    let mut centers = DMatrix::zeros(k_tilde, 2);
    let first = rng.random_range(0..n);
    centers.set_row(0, &coords.row(first));
    let mut nearest: Vec<f64> = (0..n).map(|i| sq(i, &centers, 0)).collect();
    for c in 1..k_tilde {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = None;
            for (i, &d) in nearest.iter().enumerate() {
                if d > 0.0 {
                    if target < d {
                        chosen = Some(i);
                        break;
                    }
                    target -= d;
                }
            }
            // rounding can walk past the end; fall back to the last positive weight
            chosen.unwrap_or_else(|| nearest.iter().rposition(|&d| d > 0.0).unwrap())
        } else {
            // every site already coincides with a center
            rng.random_range(0..n)
        };
        centers.set_row(c, &coords.row(pick));
        for (i, d) in nearest.iter_mut().enumerate() {
            *d = d.min(sq(i, &centers, c));
        }
    }

    let mut assign = vec![usize::MAX; n];
    for _ in 0..MAX_LLOYD_ITERS {
        let mut changed = false;
        for i in 0..n {
            let best = (0..k_tilde)
                .map(|c| (c, sq(i, &centers, c)))
                .fold(
                    (0, f64::INFINITY),
                    |acc, x| if x.1 < acc.1 { x } else { acc },
                )
                .0;
            if assign[i] != best {
                assign[i] = best;
                changed = true;
            }
        }
        let mut sums = DMatrix::<f64>::zeros(k_tilde, 2);
        let mut counts = vec![0usize; k_tilde];
        for i in 0..n {
            counts[assign[i]] += 1;
            sums[(assign[i], 0)] += coords[(i, 0)];
            sums[(assign[i], 1)] += coords[(i, 1)];
        }
        for c in 0..k_tilde {
            if counts[c] > 0 {
                centers[(c, 0)] = sums[(c, 0)] / counts[c] as f64;
                centers[(c, 1)] = sums[(c, 1)] / counts[c] as f64;
            } else {
                // empty cluster: move it to the site farthest from its center
                let far = (0..n)
                    .map(|i| (i, sq(i, &centers, assign[i])))
                    .fold((0, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc })
                    .0;
                centers.set_row(c, &coords.row(far));
                assign[far] = c;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    Ok(centers)
}

/// Raw radial basis `phi(|s_i - c_j|)`, before standardization.
pub fn tps_raw(coords: &DMatrix<f64>, knots: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if let Some((a, b)) = find_duplicate_rows(knots) {
        return Err(Error::DuplicateKnots(a, b));
    }
    Ok(pairwise_distances(coords, knots).map(tps_radial))
}

/// Standardized thin-plate basis, together with the column means and
/// standard deviations used.
pub fn tps_basis(
    coords: &DMatrix<f64>,
    knots: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, DVector<f64>, DVector<f64>)> {
    let raw = tps_raw(coords, knots)?;
    standardize(raw, "spline")
}

fn standardize(
    mut m: DMatrix<f64>,
    what: &str,
) -> Result<(DMatrix<f64>, DVector<f64>, DVector<f64>)> {
    let n = m.nrows() as f64;
    let mut means = DVector::zeros(m.ncols());
    let mut sds = DVector::zeros(m.ncols());
    for (j, mut col) in m.column_iter_mut().enumerate() {
        let mean = col.mean();
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
        let sd = var.sqrt();
        if !(sd > 1e-12 * mean.abs().max(1.0)) {
            return Err(Error::CollinearDesign(format!(
                "{what} column {j} is constant"
            )));
        }
        col.apply(|v| *v = (*v - mean) / sd);
        means[j] = mean;
        sds[j] = sd;
    }
    Ok((m, means, sds))
}

fn check_collinearity(z: &DMatrix<f64>) -> Result<()> {
    let n = z.nrows() as f64;
    // columns are standardized, so z'z / (n - 1) is the correlation matrix
    let corr = z.tr_mul(z) / (n - 1.0);
    for a in 0..z.ncols() {
        for b in (a + 1)..z.ncols() {
            if corr[(a, b)].abs() >= 0.9999 {
                return Err(Error::CollinearDesign(format!(
                    "columns {a} and {b} have correlation {:.6}",
                    corr[(a, b)]
                )));
            }
        }
    }
    Ok(())
}

/// Standardized covariates followed by `k_tilde` standardized spline columns.
pub fn build_design(frame: &SiteFrame, k_tilde: usize, seed: u64) -> Result<DesignMatrix> {
    let n = frame.n();
    if n < 3 {
        return Err(Error::CollinearDesign(format!("only {n} sites")));
    }
    let knots = select_knots(frame.coords(), k_tilde, seed)?;
    let (cov_std, cov_means, cov_sds) = standardize(frame.covars().clone(), "covariate")?;
    let (spl_std, spl_means, spl_sds) = if k_tilde > 0 {
        tps_basis(frame.coords(), &knots)?
    } else {
        (DMatrix::zeros(n, 0), DVector::zeros(0), DVector::zeros(0))
    };
    let k = frame.k();
    let mut z = DMatrix::zeros(n, k + k_tilde);
    z.columns_mut(0, k).copy_from(&cov_std);
    z.columns_mut(k, k_tilde).copy_from(&spl_std);
    check_collinearity(&z)?;
    let mut col_means = DVector::zeros(k + k_tilde);
    col_means.rows_mut(0, k).copy_from(&cov_means);
    col_means.rows_mut(k, k_tilde).copy_from(&spl_means);
    let mut col_sds = DVector::zeros(k + k_tilde);
    col_sds.rows_mut(0, k).copy_from(&cov_sds);
    col_sds.rows_mut(k, k_tilde).copy_from(&spl_sds);
    Ok(DesignMatrix {
        z,
        k,
        k_tilde,
        knots,
        col_means,
        col_sds,
    })
}

/// Rebuilds the design at new sites with the training knots and scalings.
pub fn eval_design_at(design: &DesignMatrix, new_frame: &SiteFrame) -> Result<DMatrix<f64>> {
    if new_frame.k() != design.k {
        return Err(Error::SchemaMismatch(format!(
            "design has {} covariates, new sites have {}",
            design.k,
            new_frame.k()
        )));
    }
    let m = new_frame.n();
    let mut out = DMatrix::zeros(m, design.k + design.k_tilde);
    out.columns_mut(0, design.k).copy_from(new_frame.covars());
    if design.k_tilde > 0 {
        let raw = tps_raw(new_frame.coords(), &design.knots)?;
        out.columns_mut(design.k, design.k_tilde).copy_from(&raw);
    }
    for j in 0..out.ncols() {
        let (mean, sd) = (design.col_means[j], design.col_sds[j]);
        out.column_mut(j).apply(|v| *v = (*v - mean) / sd);
    }
    Ok(out)
}
