//! Partially observed pollutant matrices, site frames and the rank-one
//! mechanics (centering, deflation, projection) shared by every reducer.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// An `n x p` matrix of pollutant values together with its observation mask.
///
/// Missing cells hold `NaN` internally; every accessor consults the mask, so
/// the stored value of a missing cell is never part of the contract.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedMatrix {
    values: DMatrix<f64>,
    mask: DMatrix<bool>,
}

impl ObservedMatrix {
    /// Builds a matrix from values and a mask (`true` = observed).
    ///
    /// Fails if the shapes differ, a column has fewer than two observed
    /// entries or a row has none.
    pub fn new(values: DMatrix<f64>, mask: DMatrix<bool>) -> Result<Self> {
        if values.shape() != mask.shape() {
            return Err(Error::DimensionMismatch(format!(
                "values are {:?} but mask is {:?}",
                values.shape(),
                mask.shape()
            )));
        }
        let out = Self::new_unchecked(values, mask);
        out.validate()?;
        Ok(out)
    }

    pub(crate) fn new_unchecked(mut values: DMatrix<f64>, mask: DMatrix<bool>) -> Self {
        for (v, &m) in values.iter_mut().zip(mask.iter()) {
            if !m {
                *v = f64::NAN;
            }
        }
        Self { values, mask }
    }

    /// A fully observed matrix.
    pub fn complete(values: DMatrix<f64>) -> Result<Self> {
        let mask = DMatrix::from_element(values.nrows(), values.ncols(), true);
        Self::new(values, mask)
    }

    /// Builds from row-major optional cells; `None` marks a missing cell.
    pub fn from_rows(rows: &[Vec<Option<f64>>]) -> Result<Self> {
        let n = rows.len();
        let p = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != p) {
            return Err(Error::DimensionMismatch("ragged rows".into()));
        }
        let values = DMatrix::from_fn(n, p, |i, j| rows[i][j].unwrap_or(f64::NAN));
        let mask = DMatrix::from_fn(n, p, |i, j| rows[i][j].is_some());
        Self::new(values, mask)
    }

    fn validate(&self) -> Result<()> {
        for j in 0..self.ncols() {
            if self.mask.column(j).iter().filter(|&&m| m).count() < 2 {
                return Err(Error::UnidentifiableColumn(j));
            }
        }
        for i in 0..self.nrows() {
            if !self.mask.row(i).iter().any(|&m| m) {
                return Err(Error::EmptyRow(i));
            }
        }
        Ok(())
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    pub fn mask(&self) -> &DMatrix<bool> {
        &self.mask
    }

    #[inline]
    pub fn is_observed(&self, i: usize, j: usize) -> bool {
        self.mask[(i, j)]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.mask[(i, j)].then(|| self.values[(i, j)])
    }

    pub fn is_complete(&self) -> bool {
        self.mask.iter().all(|&m| m)
    }

    pub fn observed_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn missing_fraction(&self) -> f64 {
        1.0 - self.observed_count() as f64 / (self.nrows() * self.ncols()) as f64
    }

    /// Iterates `(row, col, value)` over observed cells in column-major order.
    pub fn iter_observed(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let n = self.nrows();
        self.mask
            .iter()
            .zip(self.values.iter())
            .enumerate()
            .filter(|(_, (&m, _))| m)
            .map(move |(k, (_, &v))| (k % n, k / n, v))
    }

    /// Dense copy with missing cells filled by `fill(i, j)`.
    pub fn filled_with<F: Fn(usize, usize) -> f64>(&self, fill: F) -> DMatrix<f64> {
        DMatrix::from_fn(self.nrows(), self.ncols(), |i, j| {
            if self.mask[(i, j)] {
                self.values[(i, j)]
            } else {
                fill(i, j)
            }
        })
    }

    /// Dense copy with every missing cell set to `fill`.
    pub fn filled(&self, fill: f64) -> DMatrix<f64> {
        self.filled_with(|_, _| fill)
    }

    /// The dense values; fails unless every cell is observed.
    pub fn to_dense(&self) -> Result<DMatrix<f64>> {
        if self.is_complete() {
            Ok(self.values.clone())
        } else {
            Err(Error::NotComplete)
        }
    }

    /// Hides additional cells. `extra_missing(i, j) == true` masks the cell.
    pub fn mask_more<F: Fn(usize, usize) -> bool>(&self, extra_missing: F) -> Result<Self> {
        let mask = DMatrix::from_fn(self.nrows(), self.ncols(), |i, j| {
            self.mask[(i, j)] && !extra_missing(i, j)
        });
        Self::new(self.values.clone(), mask)
    }

    /// Sub-matrix of the given rows, in order.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        Self::new(self.values.select_rows(rows), self.mask.select_rows(rows))
    }

    /// Per-column observed mean.
    pub fn observed_column_means(&self) -> Result<DVector<f64>> {
        let mut means = DVector::zeros(self.ncols());
        for j in 0..self.ncols() {
            let (sum, count) = self
                .mask
                .column(j)
                .iter()
                .zip(self.values.column(j).iter())
                .filter(|(&m, _)| m)
                .fold((0.0, 0usize), |(s, c), (_, &v)| (s + v, c + 1));
            if count < 2 {
                return Err(Error::UnidentifiableColumn(j));
            }
            means[j] = sum / count as f64;
        }
        Ok(means)
    }

    /// Applies `f(i, j, x)` to observed cells, keeping the mask.
    pub(crate) fn map_observed<F: Fn(usize, usize, f64) -> f64>(&self, f: F) -> Self {
        let values = DMatrix::from_fn(self.nrows(), self.ncols(), |i, j| {
            if self.mask[(i, j)] {
                f(i, j, self.values[(i, j)])
            } else {
                f64::NAN
            }
        });
        Self {
            values,
            mask: self.mask.clone(),
        }
    }
}

/// Site coordinates and geographic covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct SiteFrame {
    coords: DMatrix<f64>,
    covars: DMatrix<f64>,
}

impl SiteFrame {
    /// `coords` is `n x 2`, `covars` is `n x k` (`k` may be zero).
    pub fn new(coords: DMatrix<f64>, covars: DMatrix<f64>) -> Result<Self> {
        if coords.ncols() != 2 {
            return Err(Error::DimensionMismatch(format!(
                "coordinates need 2 columns, got {}",
                coords.ncols()
            )));
        }
        if coords.nrows() != covars.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "{} coordinate rows but {} covariate rows",
                coords.nrows(),
                covars.nrows()
            )));
        }
        for ((row, col), v) in covars
            .iter()
            .enumerate()
            .map(|(k, v)| ((k % covars.nrows().max(1), k / covars.nrows().max(1)), v))
        {
            if !v.is_finite() {
                return Err(Error::NonFiniteCovariate { row, col });
            }
        }
        if let Some((a, b)) = find_duplicate_rows(&coords) {
            return Err(Error::DuplicateSites(a, b));
        }
        Ok(Self { coords, covars })
    }

    pub fn n(&self) -> usize {
        self.coords.nrows()
    }

    /// Number of covariates.
    pub fn k(&self) -> usize {
        self.covars.ncols()
    }

    pub fn coords(&self) -> &DMatrix<f64> {
        &self.coords
    }

    pub fn covars(&self) -> &DMatrix<f64> {
        &self.covars
    }

    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        Self::new(self.coords.select_rows(rows), self.covars.select_rows(rows))
    }
}

/// Returns the first pair of rows with identical `(x, y)`.
pub(crate) fn find_duplicate_rows(coords: &DMatrix<f64>) -> Option<(usize, usize)> {
    let mut order: Vec<usize> = (0..coords.nrows()).collect();
    order.sort_by(|&a, &b| {
        coords[(a, 0)]
            .total_cmp(&coords[(b, 0)])
            .then(coords[(a, 1)].total_cmp(&coords[(b, 1)]))
    });
    order.windows(2).find_map(|w| {
        let (a, b) = (w[0], w[1]);
        (coords[(a, 0)] == coords[(b, 0)] && coords[(a, 1)] == coords[(b, 1)])
            .then(|| (a.min(b), a.max(b)))
    })
}

/// Which reducer produced a component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Pca,
    PredPca,
    ProprSpline,
    ProprKrige,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::Pca,
        Method::PredPca,
        Method::ProprSpline,
        Method::ProprKrige,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Method::Pca => "pca",
            Method::PredPca => "predpca",
            Method::ProprSpline => "proprpca_spline",
            Method::ProprKrige => "proprpca_krige",
        }
    }

    /// PCA and PredPCA need a complete matrix and therefore an imputer.
    pub fn needs_imputation(self) -> bool {
        matches!(self, Method::Pca | Method::PredPca)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "pca" => Ok(Method::Pca),
            "predpca" => Ok(Method::PredPca),
            "proprpca_spline" | "spline" => Ok(Method::ProprSpline),
            "proprpca_krige" | "krige" => Ok(Method::ProprKrige),
            other => Err(Error::InvalidConfig(format!("unknown method `{other}`"))),
        }
    }
}

/// Exponential covariance parameters of a latent score field (no nugget).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatentCovParams {
    pub partial_sill: f64,
    pub range: f64,
}

/// One extracted principal component.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentModel {
    /// Unit-norm loading `v`.
    pub loading: DVector<f64>,
    /// Projection score at the fitting sites.
    pub score: DVector<f64>,
    /// `alpha` for PredPCA, `beta` for the probabilistic variants, empty for PCA.
    pub coef: DVector<f64>,
    /// Residual noise variance `gamma^2` (strictly positive).
    pub noise_var: f64,
    /// Latent covariance parameters; only set by the kriging variant.
    pub spatial_params: Option<LatentCovParams>,
    /// Model-based latent mean used for imputation (`Z beta`, posterior mean, ...).
    pub latent_mean: DVector<f64>,
    pub method: Method,
    pub converged: bool,
    pub iterations: usize,
    /// Per-iteration monitored objective, when requested through `FitOptions::trace`.
    pub trace: Vec<f64>,
}

/// Ordered list of components plus the centering applied before fitting.
#[derive(Debug, Clone, PartialEq)]
pub struct ReductionResult {
    pub components: Vec<ComponentModel>,
    pub column_means: DVector<f64>,
    /// Column scales when unit-variance scaling was requested.
    pub column_scales: Option<DVector<f64>>,
}

impl ReductionResult {
    pub fn q(&self) -> usize {
        self.components.len()
    }

    /// `p x q` loading matrix.
    pub fn loadings(&self) -> DMatrix<f64> {
        let p = self.column_means.len();
        DMatrix::from_fn(p, self.q(), |j, l| self.components[l].loading[j])
    }

    /// `n x q` training scores.
    pub fn scores(&self) -> DMatrix<f64> {
        let n = self.components.first().map_or(0, |c| c.score.len());
        DMatrix::from_fn(n, self.q(), |i, l| self.components[l].score[i])
    }

    pub fn all_converged(&self) -> bool {
        self.components.iter().all(|c| c.converged)
    }

    /// Applies the training centering (and scaling) to new rows.
    pub fn standardize(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.ncols() != self.column_means.len() {
            return Err(Error::DimensionMismatch(format!(
                "expected {} columns, got {}",
                self.column_means.len(),
                x.ncols()
            )));
        }
        Ok(DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| {
            let c = x[(i, j)] - self.column_means[j];
            match &self.column_scales {
                Some(s) => c / s[j],
                None => c,
            }
        }))
    }

    /// Scores of new complete rows: centred data projected onto each loading.
    pub fn project(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        Ok(self.standardize(x)? * self.loadings())
    }
}

/// Subtracts each column's observed mean from its observed entries.
pub fn center_columns(x: &ObservedMatrix) -> Result<(ObservedMatrix, DVector<f64>)> {
    let means = x.observed_column_means()?;
    Ok((x.map_observed(|_, j, v| v - means[j]), means))
}

/// Centers and divides each column by its observed standard deviation.
/// Columns with zero spread keep scale 1.
pub fn standardize_columns(
    x: &ObservedMatrix,
) -> Result<(ObservedMatrix, DVector<f64>, DVector<f64>)> {
    let (centered, means) = center_columns(x)?;
    let mut scales = DVector::from_element(x.ncols(), 1.0);
    for j in 0..x.ncols() {
        let (ss, count) = (0..x.nrows())
            .filter_map(|i| centered.get(i, j))
            .fold((0.0, 0usize), |(s, c), v| (s + v * v, c + 1));
        let sd = (ss / (count as f64 - 1.0)).sqrt();
        if sd > 0.0 {
            scales[j] = sd;
        }
    }
    let scaled = centered.map_observed(|_, j, v| v / scales[j]);
    Ok((scaled, means, scales))
}

/// Removes a rank-one term from the observed entries: `x_ij - u_i v_j`.
pub fn deflate(x: &ObservedMatrix, u: &DVector<f64>, v: &DVector<f64>) -> Result<ObservedMatrix> {
    if u.len() != x.nrows() || v.len() != x.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "cannot deflate {}x{} by u of length {} and v of length {}",
            x.nrows(),
            x.ncols(),
            u.len(),
            v.len()
        )));
    }
    Ok(x.map_observed(|i, j, val| val - u[i] * v[j]))
}

/// Projects a filled matrix onto a loading: `X v`.
pub fn project_scores(x_filled: &DMatrix<f64>, v: &DVector<f64>) -> Result<DVector<f64>> {
    if x_filled.ncols() != v.len() {
        return Err(Error::DimensionMismatch(format!(
            "matrix has {} columns, loading has {} entries",
            x_filled.ncols(),
            v.len()
        )));
    }
    Ok(x_filled * v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dmatrix, dvector};

    fn obs(rows: &[&[Option<f64>]]) -> ObservedMatrix {
        ObservedMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn center_two_point_column() {
        let x = obs(&[&[Some(1.0)], &[Some(3.0)]]);
        let (c, m) = center_columns(&x).unwrap();
        assert_eq!(m[0], 2.0);
        assert_eq!(c.get(0, 0), Some(-1.0));
        assert_eq!(c.get(1, 0), Some(1.0));
    }

    #[test]
    fn center_zero_matrix_is_noop() {
        let x = ObservedMatrix::complete(DMatrix::zeros(3, 2)).unwrap();
        let (c, m) = center_columns(&x).unwrap();
        assert_eq!(m, DVector::zeros(2));
        assert_eq!(c, x);
    }

    #[test]
    fn center_skips_missing_entries() {
        // a second, complete column keeps row 2 non-empty
        let x = obs(&[
            &[Some(1.0), Some(0.0)],
            &[Some(2.0), Some(0.0)],
            &[None, Some(1.0)],
            &[Some(3.0), Some(1.0)],
        ]);
        let (c, m) = center_columns(&x).unwrap();
        // (1 + 2 + 3) / 3
        assert_eq!(m[0], 2.0);
        assert_eq!(c.get(0, 0), Some(-1.0));
        assert_eq!(c.get(1, 0), Some(0.0));
        assert_eq!(c.get(2, 0), None);
        assert_eq!(c.get(3, 0), Some(1.0));
        assert_eq!(c.mask(), x.mask());
    }

    #[test]
    fn identifiability_is_enforced() {
        let err = ObservedMatrix::from_rows(&[vec![Some(1.0), None], vec![Some(2.0), Some(1.0)]]);
        assert!(matches!(err, Err(Error::UnidentifiableColumn(1))));
        let err = ObservedMatrix::from_rows(&[
            vec![Some(1.0), Some(1.0)],
            vec![None, None],
            vec![Some(2.0), Some(1.0)],
        ]);
        assert!(matches!(err, Err(Error::EmptyRow(1))));
    }

    #[test]
    fn deflate_rank_one_to_zero() {
        let u = dvector![2.0, -1.0, 0.5];
        let v = dvector![0.6, 0.8];
        let x = ObservedMatrix::complete(&u * v.transpose()).unwrap();
        let r = deflate(&x, &u, &v).unwrap();
        for (_, _, val) in r.iter_observed() {
            assert!(val.abs() < 1e-15);
        }
        let zero = deflate(&x, &DVector::zeros(3), &v).unwrap();
        assert_eq!(zero, x);
    }

    #[test]
    fn deflate_two_by_two_entrywise() {
        let x = ObservedMatrix::complete(dmatrix![4.0, 2.0; 2.0, 1.0]).unwrap();
        let s5 = 5f64.sqrt();
        let u = dvector![2.0, 1.0];
        let v = dvector![2.0 / s5, 1.0 / s5];
        let r = deflate(&x, &u, &v).unwrap();
        // x_ij - u_i v_j by hand
        let expected = [
            [4.0 - 4.0 / s5, 2.0 - 2.0 / s5],
            [2.0 - 2.0 / s5, 1.0 - 1.0 / s5],
        ];
        for i in 0..2 {
            for j in 0..2 {
                assert!((r.get(i, j).unwrap() - expected[i][j]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn deflate_rejects_bad_shapes() {
        let x = ObservedMatrix::complete(DMatrix::zeros(3, 2)).unwrap();
        assert!(matches!(
            deflate(&x, &DVector::zeros(2), &DVector::zeros(2)),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn projection_cases() {
        let e1 = dvector![1.0, 0.0, 0.0];
        assert_eq!(
            project_scores(&DMatrix::identity(3, 3), &e1).unwrap(),
            dvector![1.0, 0.0, 0.0]
        );
        let u = dvector![1.0, -2.0, 3.0, 0.5];
        let v = dvector![0.6, 0.0, 0.8];
        let got = project_scores(&(&u * v.transpose()), &v).unwrap();
        assert!((got - &u).amax() < 1e-14);

        let x = DMatrix::from_fn(5, 3, |i, j| ((i * 3 + j) as f64).sin());
        let got = project_scores(&x, &v).unwrap();
        for i in 0..5 {
            let direct: f64 = (0..3).map(|j| x[(i, j)] * v[j]).sum();
            assert!((got[i] - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn deflate_then_project_is_zero() {
        let u = dvector![1.5, -0.5, 2.0];
        let v = dvector![0.0, 0.6, 0.8];
        let x = ObservedMatrix::complete(&u * v.transpose()).unwrap();
        let r = deflate(&x, &u, &v).unwrap();
        let s = project_scores(&r.to_dense().unwrap(), &v).unwrap();
        assert!(s.amax() < 1e-10);
    }

    #[test]
    fn site_frame_rejects_duplicates_and_nan() {
        let coords = dmatrix![0.0, 0.0; 1.0, 0.0; 0.0, 0.0];
        assert!(matches!(
            SiteFrame::new(coords, DMatrix::zeros(3, 0)),
            Err(Error::DuplicateSites(0, 2))
        ));
        let coords = dmatrix![0.0, 0.0; 1.0, 0.0];
        let covars = dmatrix![1.0; f64::NAN];
        assert!(matches!(
            SiteFrame::new(coords, covars),
            Err(Error::NonFiniteCovariate { row: 1, col: 0 })
        ));
    }

    #[test]
    fn method_tags_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.tag().parse::<Method>().unwrap(), m);
        }
    }
}
