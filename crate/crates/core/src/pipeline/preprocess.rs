//! Preparing real monitoring data: log-proportions of component mass and
//! screening of GIS covariates.

use std::collections::HashMap;
use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::data::ObservedMatrix;
use crate::error::{Error, Result};
use crate::linalg::canonical_sign;

/// `log(component / total)` on observed cells.
pub fn preprocess_components(raw: &ObservedMatrix, totals: &DVector<f64>) -> Result<ObservedMatrix> {
    if totals.len() != raw.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "{} totals for {} sites",
            totals.len(),
            raw.nrows()
        )));
    }
    let (n, p) = (raw.nrows(), raw.ncols());
    let mut values = DMatrix::from_element(n, p, f64::NAN);
    for (i, j, x) in raw.iter_observed() {
        if !(x > 0.0) {
            return Err(Error::NonpositiveMass { row: i, col: j });
        }
        if !(totals[i] > 0.0) {
            return Err(Error::NonpositiveMass { row: i, col: j });
        }
        values[(i, j)] = (x / totals[i]).ln();
    }
    ObservedMatrix::new(values, raw.mask().clone())
}

/// Screening rule that removed a covariate, in the order they are applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterRule {
    /// No observed value at any site.
    AllMissing,
    /// One value shared by at least 80% of the sites.
    MostlyConstant,
    /// At least 2% of the values lie more than 5 sd from the mean.
    Outlying,
    /// Land-use share never exceeds 10%.
    SparseLandUse,
}

impl fmt::Display for FilterRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FilterRule::AllMissing => "all_missing",
            FilterRule::MostlyConstant => "mostly_constant",
            FilterRule::Outlying => "outlying",
            FilterRule::SparseLandUse => "sparse_land_use",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GisFilter {
    /// Indices of the surviving input columns.
    pub kept: Vec<usize>,
    /// Surviving columns; remaining missing cells hold the column mean.
    pub covars: DMatrix<f64>,
    /// `(column, rule)` for every removed column.
    pub removed: Vec<(usize, FilterRule)>,
}

pub const CONSTANT_SHARE: f64 = 0.8;
pub const OUTLIER_SD: f64 = 5.0;
pub const OUTLIER_SHARE: f64 = 0.02;
/// Land-use covariates are shares in `[0, 1]`.
pub const LAND_USE_MAX: f64 = 0.10;

fn screen(col: &[f64], land_use: bool) -> Option<FilterRule> {
    let n = col.len();
    let obs: Vec<f64> = col.iter().copied().filter(|v| v.is_finite()).collect();
    if obs.is_empty() {
        return Some(FilterRule::AllMissing);
    }
    let mut counts: HashMap<u64, usize> = HashMap::new();
    for v in &obs {
        let key = if *v == 0.0 { 0.0f64.to_bits() } else { v.to_bits() };
        *counts.entry(key).or_default() += 1;
    }
    let top = counts.values().copied().max().unwrap_or(0);
    if top as f64 >= CONSTANT_SHARE * n as f64 {
        return Some(FilterRule::MostlyConstant);
    }
    let m = obs.len() as f64;
    let mean = obs.iter().sum::<f64>() / m;
    let sd = (obs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0).max(1.0)).sqrt();
    let far = obs.iter().filter(|v| (*v - mean).abs() > OUTLIER_SD * sd).count();
    if far as f64 >= OUTLIER_SHARE * m {
        return Some(FilterRule::Outlying);
    }
    if land_use && obs.iter().copied().fold(f64::NEG_INFINITY, f64::max) <= LAND_USE_MAX {
        return Some(FilterRule::SparseLandUse);
    }
    None
}

/// Applies the four screening rules column by column. `covars` marks missing
/// cells with `NaN`; `land_use[j]` flags land-use share columns.
pub fn filter_gis_covariates(covars: &DMatrix<f64>, land_use: &[bool]) -> Result<GisFilter> {
    if land_use.len() != covars.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "{} land-use flags for {} covariates",
            land_use.len(),
            covars.ncols()
        )));
    }
    let mut kept = Vec::new();
    let mut removed = Vec::new();
    for j in 0..covars.ncols() {
        let col: Vec<f64> = covars.column(j).iter().copied().collect();
        match screen(&col, land_use[j]) {
            Some(rule) => removed.push((j, rule)),
            None => kept.push(j),
        }
    }
    if kept.is_empty() {
        return Err(Error::NoSurvivors);
    }
    let mut out = covars.select_columns(&kept);
    for mut col in out.column_iter_mut() {
        let obs: Vec<f64> = col.iter().copied().filter(|v| v.is_finite()).collect();
        let mean = obs.iter().sum::<f64>() / obs.len() as f64;
        for v in col.iter_mut() {
            if !v.is_finite() {
                *v = mean;
            }
        }
    }
    Ok(GisFilter {
        kept,
        covars: out,
        removed,
    })
}

/// First `n_components` principal component scores of the standardized
/// covariates, each signed so its loading's largest entry is positive.
pub fn gis_pca(covars: &DMatrix<f64>, n_components: usize) -> Result<DMatrix<f64>> {
    let (n, k) = covars.shape();
    if n_components == 0 || k < n_components || n <= n_components {
        return Err(Error::InvalidConfig(format!(
            "{n_components} components from {n} sites and {k} covariates"
        )));
    }
    let mut xs = covars.clone();
    for (j, mut col) in xs.column_iter_mut().enumerate() {
        let mean = col.mean();
        col.add_scalar_mut(-mean);
        let sd = (col.norm_squared() / (n as f64 - 1.0)).sqrt();
        if !(sd > 0.0) || !sd.is_finite() {
            return Err(Error::DegenerateInput(format!("covariate {j} is constant")));
        }
        col /= sd;
    }
    let svd = xs.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let mut scores = DMatrix::zeros(n, n_components);
    for (l, &idx) in order.iter().take(n_components).enumerate() {
        let mut v: DVector<f64> = v_t.row(idx).transpose();
        v *= canonical_sign(&v);
        scores.set_column(l, &(&xs * v));
    }
    Ok(scores)
}
