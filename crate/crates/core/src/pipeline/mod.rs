//! Experiment runner, CSV input/output, configuration and the preprocessing
//! path for real monitoring data.

pub mod config;
mod experiment;
pub mod io;
mod loocv;
mod preprocess;

pub use experiment::{
    impute_training, mean_loading, replicate_data, run_experiment, run_method, summarize,
    ExperimentReport, ExperimentSpec, FailureRow, Imputer, LoadingRow, MethodOutcome,
    ReplicateData, ResultRow, SimilarityRow, SummaryRow, TimingRow,
};
pub use loocv::{run_loocv, LoocvFold, LoocvReport, LoocvRow, LoocvSpec, LoocvTraining};
pub use preprocess::{
    filter_gis_covariates, gis_pca, preprocess_components, FilterRule, GisFilter,
};
