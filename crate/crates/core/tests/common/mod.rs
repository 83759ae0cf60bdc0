#![allow(dead_code)]

use std::sync::Arc;

use distnet::features::{
    build_windows, FeatureOptions, FeatureSet, Pollutant, RawDataset, SplitPlan, WindowConfig,
    WindowSplit,
};
use distnet::grid::GridSpec;
use distnet::models::{ModelConfig, ModelKind};
use distnet::synth::{generate, preset, Source};

/// A small synthetic dataset on a `rows x cols` grid.
pub fn toy_dataset(
    rows: usize,
    cols: usize,
    stations: usize,
    hours: usize,
    seed: u64,
) -> RawDataset {
    let mut cfg = preset("tiny").unwrap();
    cfg.grid = GridSpec::new(rows, cols, 39.8, 116.2, 0.1).unwrap();
    cfg.sources = vec![
        Source {
            row: rows / 3,
            col: cols / 2,
            rate: 4.0,
            amplitude: 0.5,
            peak_hour: 8.0,
        },
        Source {
            row: rows - 1,
            col: 0,
            rate: 2.0,
            amplitude: 0.3,
            peak_hour: 19.0,
        },
    ];
    cfg.stations = stations;
    cfg.hours = hours;
    cfg.seed = seed;
    cfg.missing_rate = 0.0;
    cfg.spin_up_hours = 48;
    generate(&cfg).unwrap().dataset
}

pub fn feature_set(ds: &RawDataset, cutoff: usize) -> Arc<FeatureSet> {
    Arc::new(FeatureSet::build(ds, Pollutant::Pm25, cutoff, FeatureOptions::default()).unwrap())
}

pub fn windows(fs: &Arc<FeatureSet>, t: usize, tau: usize, cutoff: usize) -> WindowSplit {
    let cfg = WindowConfig {
        encoder_len: t,
        horizon: tau,
        stride: 1,
    };
    build_windows(fs, cfg, SplitPlan::new(cutoff, 0.0).unwrap()).unwrap()
}

/// Small architecture for fast tests.
pub fn small_config(kind: ModelKind, t: usize, tau: usize) -> ModelConfig {
    ModelConfig {
        kind,
        encoder_len: t,
        horizon: tau,
        conv_layers: 2,
        conv_channels: 4,
        hidden: 8,
        mlp_spatial: 6,
        mlp_temporal: vec![10, 6],
        seed: 11,
        ..ModelConfig::default()
    }
}
