use std::ops::Range;
use std::sync::Arc;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use super::dataset::{Pollutant, RawDataset, CONDITIONS};
use super::normalize::{FeatureRange, NormalizationSpec};
use super::stats::{fill_short_gaps, statistical_features, TimeIds, GAMMA};
use crate::error::{Error, Result};
use crate::grid::{fill_series, GridSpec, StationSet};

/// Continuous channels of a grid frame, in channel order. The pollutant is
/// channel 0; condition one-hots follow these and are not rescaled.
pub const CONTINUOUS_CHANNELS: [&str; 7] = [
    "pollutant",
    "temperature",
    "pressure",
    "humidity",
    "wind_speed",
    "wind_u",
    "wind_v",
];
/// Channels per grid cell: pollutant plus `n` weather features.
pub const CHANNELS: usize = CONTINUOUS_CHANNELS.len() + CONDITIONS;
/// Weather channels per cell.
pub const WEATHER_CHANNELS: usize = CHANNELS - 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureOptions {
    /// Longest run of missing hours filled by linear interpolation.
    pub max_gap: usize,
}

impl Default for FeatureOptions {
    fn default() -> Self {
        Self { max_gap: 6 }
    }
}

/// Normalized grid frames, statistical features and targets for one
/// pollutant, shared by all windows cut from it.
#[derive(Debug, Clone)]
pub struct FeatureSet {
    pub pollutant: Pollutant,
    pub grid: GridSpec,
    pub stations: StationSet,
    pub start: NaiveDateTime,
    pub hours: usize,
    /// Last hour index of the training split.
    pub train_cutoff: usize,
    pub normalization: NormalizationSpec,
    /// `[hours, rows, cols, CHANNELS]`, normalized.
    frames: Vec<f64>,
    /// Gap-filled readings per station in original units.
    targets: Vec<Vec<Option<f64>>>,
    /// `[stations, hours, GAMMA]` over the normalized series at each station cell.
    stats: Vec<f64>,
}

fn wind_components(speed: f64, from_deg: f64) -> (f64, f64) {
    let r = from_deg.to_radians();
    (-speed * r.sin(), -speed * r.cos())
}

impl FeatureSet {
    /// Grids the pollutant, encodes weather, and fits normalization on hours
    /// `0..=train_cutoff`.
    pub fn build(
        ds: &RawDataset,
        pollutant: Pollutant,
        train_cutoff: usize,
        opts: FeatureOptions,
    ) -> Result<Self> {
        Self::assemble(ds, pollutant, train_cutoff, opts, None)
    }

    /// Like [`FeatureSet::build`] but scales with `frozen` ranges, e.g. those
    /// stored with a trained model, instead of fitting new ones.
    pub fn build_frozen(
        ds: &RawDataset,
        pollutant: Pollutant,
        train_cutoff: usize,
        opts: FeatureOptions,
        frozen: &NormalizationSpec,
    ) -> Result<Self> {
        let names =
            CONTINUOUS_CHANNELS
                .iter()
                .enumerate()
                .map(|(c, n)| if c == 0 { pollutant.as_str() } else { n });
        if frozen.ranges.len() != CONTINUOUS_CHANNELS.len()
            || !frozen.ranges.iter().map(|r| r.name.as_str()).eq(names)
        {
            return Err(Error::Version(format!(
                "normalization does not cover the {pollutant} feature channels"
            )));
        }
        frozen.validate()?;
        Self::assemble(ds, pollutant, train_cutoff, opts, Some(frozen))
    }

    fn assemble(
        ds: &RawDataset,
        pollutant: Pollutant,
        train_cutoff: usize,
        opts: FeatureOptions,
        frozen: Option<&NormalizationSpec>,
    ) -> Result<Self> {
        ds.validate()?;
        let hours = ds.hours;
        let ns = ds.stations.len();
        if train_cutoff == 0 {
            return Err(Error::config("training split needs at least two hours"));
        }
        let train_end = (train_cutoff + 1).min(hours);
        let targets: Vec<Vec<Option<f64>>> = (0..ns)
            .map(|s| {
                let raw: Vec<Option<f64>> =
                    (0..hours).map(|h| ds.reading(h, s, pollutant)).collect();
                fill_short_gaps(&raw, opts.max_gap)
            })
            .collect();
        let readings: Vec<Vec<Option<f64>>> = (0..hours)
            .map(|h| (0..ns).map(|s| targets[s][h]).collect())
            .collect();
        let field = fill_series(&readings, &ds.stations, &ds.grid)?;
        let field = field.data();

        let cells = ds.grid.cells();
        let mut frames = vec![0.0; hours * cells * CHANNELS];
        for h in 0..hours {
            for cell in 0..cells {
                let w = &ds.weather[h * cells + cell];
                let (u, v) = wind_components(w.wind_speed, w.wind_direction);
                let o = (h * cells + cell) * CHANNELS;
                let px = &mut frames[o..o + CHANNELS];
                px[..7].copy_from_slice(&[
                    field[h * cells + cell],
                    w.temperature,
                    w.pressure,
                    w.humidity,
                    w.wind_speed,
                    u,
                    v,
                ]);
                px[7 + w.condition_id] = 1.0;
            }
        }
        let ranges = match frozen {
            Some(spec) => spec.ranges.clone(),
            None => {
                let mut ranges = Vec::with_capacity(CONTINUOUS_CHANNELS.len());
                for (c, name) in CONTINUOUS_CHANNELS.iter().enumerate() {
                    let name = if c == 0 { pollutant.as_str() } else { name };
                    let vals = (0..train_end * cells).map(|i| frames[i * CHANNELS + c]);
                    ranges.push(FeatureRange::fit(name, vals)?);
                }
                ranges
            }
        };
        for px in frames.chunks_mut(CHANNELS) {
            for (x, r) in px.iter_mut().zip(&ranges) {
                *x = r.transform(*x);
            }
        }

        let mut stats = vec![0.0; ns * hours * GAMMA];
        for (s, st) in ds.stations.iter().enumerate() {
            let cell = st.row * ds.grid.cols + st.col;
            let series: Vec<f64> = (0..hours)
                .map(|h| frames[(h * cells + cell) * CHANNELS])
                .collect();
            for h in 0..hours {
                let o = (s * hours + h) * GAMMA;
                stats[o..o + GAMMA].copy_from_slice(&statistical_features(&series, h));
            }
        }
        Ok(Self {
            pollutant,
            grid: ds.grid.clone(),
            stations: ds.stations.clone(),
            start: ds.start,
            hours,
            train_cutoff,
            normalization: NormalizationSpec { ranges },
            frames,
            targets,
            stats,
        })
    }

    pub fn target_range(&self) -> &FeatureRange {
        &self.normalization.ranges[0]
    }

    pub fn timestamp(&self, hour: usize) -> NaiveDateTime {
        self.start + chrono::Duration::hours(hour as i64)
    }

    /// Normalized `[rows, cols, CHANNELS]` frame of one hour.
    pub fn frame(&self, hour: usize) -> &[f64] {
        let n = self.grid.cells() * CHANNELS;
        &self.frames[hour * n..(hour + 1) * n]
    }

    /// Normalized channels of one cell at one hour.
    pub fn cell_features(&self, hour: usize, row: usize, col: usize) -> &[f64] {
        let o = (hour * self.grid.cells() + row * self.grid.cols + col) * CHANNELS;
        &self.frames[o..o + CHANNELS]
    }

    /// Mutable access for ablations; statistics are not recomputed.
    pub fn cell_features_mut(&mut self, hour: usize, row: usize, col: usize) -> &mut [f64] {
        let o = (hour * self.grid.cells() + row * self.grid.cols + col) * CHANNELS;
        &mut self.frames[o..o + CHANNELS]
    }

    pub fn stats(&self, station: usize, hour: usize) -> &[f64] {
        let o = (station * self.hours + hour) * GAMMA;
        &self.stats[o..o + GAMMA]
    }

    /// Gap-filled reading in original units, if any.
    pub fn target(&self, station: usize, hour: usize) -> Option<f64> {
        self.targets[station][hour]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowConfig {
    pub encoder_len: usize,
    pub horizon: usize,
    pub stride: usize,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self {
            encoder_len: 72,
            horizon: 48,
            stride: 1,
        }
    }
}

/// One sample: `encoder_len` input hours followed by `horizon` target hours
/// at one station. Data lives in the shared [`FeatureSet`].
#[derive(Debug, Clone)]
pub struct SampleWindow {
    pub data: Arc<FeatureSet>,
    pub station: usize,
    /// First input hour.
    pub start: usize,
    pub encoder_len: usize,
    pub horizon: usize,
}

impl SampleWindow {
    pub fn input_hours(&self) -> Range<usize> {
        self.start..self.start + self.encoder_len
    }

    pub fn target_hours(&self) -> Range<usize> {
        self.start + self.encoder_len..self.start + self.encoder_len + self.horizon
    }

    pub fn cell(&self) -> (usize, usize) {
        let s = self.data.stations.get(self.station);
        (s.row, s.col)
    }

    pub fn station_id(&self) -> &str {
        &self.data.stations.get(self.station).id
    }

    pub fn pollutant(&self) -> Pollutant {
        self.data.pollutant
    }

    /// Normalized frame of encoder step `t`.
    pub fn frame(&self, t: usize) -> &[f64] {
        self.data.frame(self.start + t)
    }

    /// Normalized channels at the target cell for encoder step `t`.
    pub fn spot(&self, t: usize) -> &[f64] {
        let (r, c) = self.cell();
        self.data.cell_features(self.start + t, r, c)
    }

    pub fn stats(&self, t: usize) -> &[f64] {
        self.data.stats(self.station, self.start + t)
    }

    pub fn future_time_ids(&self) -> Vec<TimeIds> {
        self.target_hours()
            .map(|h| TimeIds::of(self.data.timestamp(h)))
            .collect()
    }

    /// Targets in original units. Windows are only built when all are present.
    pub fn target(&self) -> Vec<f64> {
        self.target_hours()
            .map(|h| {
                self.data
                    .target(self.station, h)
                    .expect("window built over a gap")
            })
            .collect()
    }

    /// Latest reading at or before the last input hour, falling back to the
    /// gridded value there.
    pub fn last_observed(&self) -> f64 {
        let last = self.start + self.encoder_len - 1;
        for h in (self.start..=last).rev() {
            if let Some(v) = self.data.target(self.station, h) {
                return v;
            }
        }
        self.data
            .target_range()
            .inverse(self.spot(self.encoder_len - 1)[0])
            .max(0.0)
    }
}

/// Counts from one window build. Every candidate is either kept or dropped
/// for exactly one reason.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowCounts {
    pub candidates: usize,
    pub train: usize,
    pub validation: usize,
    pub test: usize,
    pub dropped_gaps: usize,
    pub dropped_straddle: usize,
}

#[derive(Debug, Clone, Default)]
pub struct WindowSplit {
    pub train: Vec<SampleWindow>,
    pub validation: Vec<SampleWindow>,
    pub test: Vec<SampleWindow>,
    pub counts: WindowCounts,
}

/// Split points in hour indices: training targets end at or before
/// `train_cutoff`; validation takes the last `validation_fraction` of the
/// training hours; test targets all lie after `train_cutoff`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitPlan {
    pub train_cutoff: usize,
    pub validation_cutoff: Option<usize>,
}

impl SplitPlan {
    pub fn new(train_cutoff: usize, validation_fraction: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&validation_fraction) {
            return Err(Error::config(format!(
                "validation fraction {validation_fraction} outside [0, 1)"
            )));
        }
        let train_hours = train_cutoff + 1;
        let val_hours = (train_hours as f64 * validation_fraction).ceil() as usize;
        let validation_cutoff = if val_hours == 0 {
            None
        } else {
            Some(train_cutoff - val_hours.min(train_cutoff))
        };
        Ok(Self {
            train_cutoff,
            validation_cutoff,
        })
    }
}

enum Bucket {
    Train,
    Validation,
    Test,
    Straddle,
}

fn bucket(plan: &SplitPlan, targets: &Range<usize>) -> Bucket {
    let (first, last) = (targets.start, targets.end - 1);
    if last <= plan.train_cutoff {
        match plan.validation_cutoff {
            Some(v) if first > v => Bucket::Validation,
            Some(v) if last > v => Bucket::Straddle,
            _ => Bucket::Train,
        }
    } else if first > plan.train_cutoff {
        Bucket::Test
    } else {
        Bucket::Straddle
    }
}

/// Slides a window over every station with the configured stride.
pub fn build_windows(
    data: &Arc<FeatureSet>,
    cfg: WindowConfig,
    plan: SplitPlan,
) -> Result<WindowSplit> {
    if cfg.encoder_len == 0 || cfg.horizon == 0 || cfg.stride == 0 {
        return Err(Error::config(
            "encoder length, horizon and stride must be positive",
        ));
    }
    let span = cfg.encoder_len + cfg.horizon;
    if data.hours < span {
        return Err(Error::ingestion(format!(
            "series of {} hours is shorter than encoder {} + horizon {}",
            data.hours, cfg.encoder_len, cfg.horizon
        )));
    }
    let mut out = WindowSplit::default();
    for station in 0..data.stations.len() {
        for start in (0..=data.hours - span).step_by(cfg.stride) {
            let w = SampleWindow {
                data: Arc::clone(data),
                station,
                start,
                encoder_len: cfg.encoder_len,
                horizon: cfg.horizon,
            };
            out.counts.candidates += 1;
            let targets = w.target_hours();
            if targets.clone().any(|h| data.target(station, h).is_none()) {
                out.counts.dropped_gaps += 1;
                continue;
            }
            match bucket(&plan, &targets) {
                Bucket::Train => {
                    out.counts.train += 1;
                    out.train.push(w);
                }
                Bucket::Validation => {
                    out.counts.validation += 1;
                    out.validation.push(w);
                }
                Bucket::Test => {
                    out.counts.test += 1;
                    out.test.push(w);
                }
                Bucket::Straddle => out.counts.dropped_straddle += 1,
            }
        }
    }
    Ok(out)
}
