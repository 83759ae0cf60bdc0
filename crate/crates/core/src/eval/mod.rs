//! Forecast metrics, horizon segments, prediction bands and reports.

mod bands;
mod interp;
mod metrics;
mod report;
mod results;
mod svg;
mod sweep;

pub use bands::{band_aggregate, coverage, BandPoint};
pub use interp::{interpolation_score, nearest_fill, InterpScore};
pub use metrics::{rmse_metric, smape_metric, smape_term, DEFAULT_EPSILON};
pub use report::{emit_report, CHART_HOURS};
pub use results::{
    forecast_windows, segmental_metrics, station_metrics, EvalResult, Forecast, PollutantSummary,
    SegmentMetrics, StationMetrics, SEGMENT_HOURS,
};
pub use svg::{band_chart, bar_chart};
pub use sweep::{encoder_length_sweep, write_sweep_csv, SweepRow};
