//! Two-stage mean and pixel-variance estimation on a Gaussian-linear
//! inverse problem.

mod metrics;
mod pipeline;

pub use metrics::{metrics, mse, nmse, variance_metrics, MetricRow};
pub use pipeline::{
    run_uncertainty_experiment, train_mean, train_var, var_label, InverseTask, InverseTaskConfig, MeanVarModels,
    StageConfig, UncertaintyConfig, UncertaintyReport, METRIC_CSV_HEADER,
};
