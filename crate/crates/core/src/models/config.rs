use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{WindowConfig, CHANNELS, GAMMA, WEATHER_CHANNELS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Distnet,
    Mlp,
    LocalSeq2seq,
    NeighborSeq2seq,
    Persistence,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::Distnet,
        ModelKind::Mlp,
        ModelKind::LocalSeq2seq,
        ModelKind::NeighborSeq2seq,
        ModelKind::Persistence,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Distnet => "distnet",
            ModelKind::Mlp => "mlp",
            ModelKind::LocalSeq2seq => "local_seq2seq",
            ModelKind::NeighborSeq2seq => "neighbor_seq2seq",
            ModelKind::Persistence => "persistence",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Lookup {
                kind: "model",
                name: s.to_string(),
            })
    }
}

/// Architecture hyperparameters. `stat_features` and `weather_channels` are
/// fixed by the feature pipeline and only checked.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub kind: ModelKind,
    /// T, encoder hours.
    pub encoder_len: usize,
    /// τ, forecast hours.
    pub horizon: usize,
    /// K; zero makes the spatial predictor the identity on the target cell.
    pub conv_layers: usize,
    /// β.
    pub conv_channels: usize,
    pub kernel_size: usize,
    /// γ.
    pub stat_features: usize,
    /// δ, also ζ.
    pub hidden: usize,
    pub hour_embedding: usize,
    pub weekday_embedding: usize,
    /// n.
    pub weather_channels: usize,
    pub mlp_spatial: usize,
    pub mlp_temporal: Vec<usize>,
    pub neighbor_radius_km: f64,
    /// Parameter initialization seed.
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            kind: ModelKind::Distnet,
            encoder_len: 72,
            horizon: 48,
            conv_layers: 3,
            conv_channels: 32,
            kernel_size: 3,
            stat_features: GAMMA,
            hidden: 64,
            hour_embedding: 6,
            weekday_embedding: 3,
            weather_channels: WEATHER_CHANNELS,
            mlp_spatial: 32,
            mlp_temporal: vec![128, 64],
            neighbor_radius_km: 10.0,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("encoder_len", self.encoder_len),
            ("horizon", self.horizon),
            ("conv_channels", self.conv_channels),
            ("kernel_size", self.kernel_size),
            ("hidden", self.hidden),
            ("hour_embedding", self.hour_embedding),
            ("weekday_embedding", self.weekday_embedding),
            ("mlp_spatial", self.mlp_spatial),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(Error::config(format!("model {name} must be positive")));
            }
        }
        if self.mlp_temporal.contains(&0) {
            return Err(Error::config("model mlp_temporal widths must be positive"));
        }
        if self.kernel_size % 2 == 0 {
            return Err(Error::config(format!(
                "kernel size {} must be odd",
                self.kernel_size
            )));
        }
        if self.stat_features != GAMMA {
            return Err(Error::config(format!(
                "stat_features is {} but the feature pipeline produces {GAMMA}",
                self.stat_features
            )));
        }
        if self.weather_channels != WEATHER_CHANNELS {
            return Err(Error::config(format!(
                "weather_channels is {} but the feature pipeline produces {WEATHER_CHANNELS}",
                self.weather_channels
            )));
        }
        if !(self.neighbor_radius_km > 0.0) {
            return Err(Error::config("neighbor radius must be positive"));
        }
        Ok(())
    }

    /// Channels per grid cell, 1 + n.
    pub fn channels(&self) -> usize {
        CHANNELS
    }

    /// β, width of the spatial feature f_t.
    pub fn beta(&self) -> usize {
        if self.conv_layers == 0 {
            CHANNELS
        } else {
            self.conv_channels
        }
    }

    /// η.
    pub fn eta(&self) -> usize {
        self.hour_embedding + self.weekday_embedding
    }

    /// Cells of context the conv stack sees on each side of the target.
    pub fn receptive_radius(&self) -> usize {
        self.conv_layers * (self.kernel_size - 1) / 2
    }

    pub fn window_config(&self) -> WindowConfig {
        WindowConfig {
            encoder_len: self.encoder_len,
            horizon: self.horizon,
            stride: 1,
        }
    }
}
