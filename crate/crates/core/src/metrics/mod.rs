//! Confusion-matrix accumulation and the six per-class / mean metrics.

mod confusion;
mod report;

pub use confusion::ConfusionMatrix;
pub use report::{
    per_class_metrics, render_report_table, ClassMetrics, MeanMetrics, MetricsReport, ReportFormat, ReportRow,
    METRIC_NAMES, TABLE_HEADER,
};
