//! Scoring rules: interval scores and their order-statistic minimizer,
//! pinball and MIS training losses, closed-form spline CRPS and summary
//! metrics.

mod interval;
mod losses;
mod metrics;
pub mod oracle;
mod spline;

pub use interval::{
    brute_force_mis_minimizer, empirical_interval, interval_score, mis_metric, mis_of_interval,
    order_statistic_ranks, IntervalSpec,
};
pub use losses::{
    crps_on_tape_masked, half_squared_error_sum_on_tape, mae_on_tape, mis_on_tape, mis_training_loss,
    pinball_loss, pinball_on_tape, quantile3_on_tape, MaskedTarget,
    quantile_levels,
};
pub use metrics::{summary_metrics, Bounds, MetricOptions, SummaryMetrics};
pub use spline::{
    crps_on_tape, crps_pwl, spline_from_raw_on_tape, spline_quantile_eval, spline_quantile_on_tape,
    SplineQuantile, SplineQuantileParams, SplineVars, SPLINE_PARAMS, SPLINE_PIECES,
};
