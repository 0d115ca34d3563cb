//! Metrics, residual-versus-regular comparisons, grid search and residual
//! count sensitivity.

mod experiment;
mod metrics;
mod studies;

pub use experiment::{
    resolve_loss, run_experiment, run_prepared, score, PreparedData, RunConfig, RunOutcome,
    TrainedModel,
};
pub use metrics::{
    argmax, auc_binary, classification_metrics, r2, r2_columns, regression_metrics, rmse_and_nrmse,
    softmax, Metrics,
};
pub use studies::{
    compare, grid_search, residual_sensitivity, seed_for, write_runs_csv, ArmRun, ArmStatus,
    ArmSummary, BatchCurve, ComparisonReport, GridCell, GridReport, GridSpec, MetricSummary,
    SensitivityReport, SensitivityRow, Spread, NRMSE_DEFINITION,
};
