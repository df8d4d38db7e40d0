//! Error metrics (plain and demand-weighted), the Ljung–Box randomness
//! partition, KL divergence between demand distributions, and the Gini
//! coefficient.

mod inequality;
mod metrics;
mod randomness;
mod report;

pub use inequality::{gini, histograms, kl_divergence, kl_histograms, lorenz, KL_SMOOTHING};
pub use metrics::{
    aggregate, aggregate_metric, global_rmse, region_metrics, AggregateRow, Metric, MetricAggregate, MetricValues,
    Mode, RegionSeries, Weights,
};
pub use randomness::{
    autocorrelations, classes_to_text, classify_regions, classify_series, ljung_box, Group, LjungBox, RegionClass,
    DEFAULT_LAGS, SIGNIFICANCE,
};
pub use report::{cumulative_mean, evaluate, rmse_by_interval, EvalReport, PartitionSummary, RegionEntry};
