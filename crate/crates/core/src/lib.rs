//! Spatially predictive principal component analysis for multi-pollutant
//! monitoring data with missing entries.
//!
//! Four reducers extract components by sequential rank-one fits with
//! deflation:
//!
//! * [`reduce::pca_fit`]: ordinary PCA (complete data).
//! * [`reduce::predpca_fit`]: predictive PCA, scores constrained to the span
//!   of a covariate-plus-spline design (complete data).
//! * [`reduce::proprpca_spline_fit`]: probabilistic predictive PCA with a
//!   thin-plate spline mean, fitted on observed entries only.
//! * [`reduce::proprpca_krige_fit`]: probabilistic predictive PCA with a
//!   latent Gaussian-process score, fitted by EM.
//!
//! Around them sit the exposure-prediction pieces: thin-plate spline design
//! matrices ([`basis`]), universal kriging with exponential covariance
//! ([`spatial`]), SoftImpute matrix completion ([`impute`]), evaluation
//! metrics ([`metrics`]), simulation generators ([`sim`]) and the experiment
//! and preprocessing pipeline ([`pipeline`]).

pub mod basis;
pub mod data;
pub mod error;
pub mod impute;
pub mod linalg;
pub mod metrics;
pub mod optim;
pub mod pipeline;
pub mod reduce;
pub mod sim;
pub mod spatial;

pub use data::{
    center_columns, deflate, project_scores, ComponentModel, LatentCovParams, Method, ObservedMatrix,
    ReductionResult, SiteFrame,
};
pub use error::{Error, Result};
