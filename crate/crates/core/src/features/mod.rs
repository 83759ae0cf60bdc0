//! Ingestion, normalization, feature construction, and sample windows.

mod dataset;
mod normalize;
mod stats;
mod windows;

pub use dataset::{
    format_timestamp, on_the_hour, parse_timestamp, read_grid_series, read_pollution, read_weather,
    write_dataset, write_grid_series, write_pollution, write_weather, DatasetManifest, Pollutant,
    RawDataset, WeatherObs, CONDITIONS, TIMESTAMP_FORMAT,
};
pub use normalize::{minmax_fit_transform, FeatureRange, NormalizationSpec};
pub use stats::{
    fill_short_gaps, statistical_features, time_features, TimeIds, DAYS_PER_WEEK, DIFF_LAGS, GAMMA,
    HOURS_PER_DAY, MEAN_WINDOWS, STD_WINDOWS,
};
pub use windows::{
    build_windows, FeatureOptions, FeatureSet, SampleWindow, SplitPlan, WindowConfig, WindowCounts,
    WindowSplit, CHANNELS, CONTINUOUS_CHANNELS, WEATHER_CHANNELS,
};
