use std::collections::BTreeMap;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use super::metrics::{rmse_metric, smape_metric};
use crate::error::{Error, Result};
use crate::features::{Pollutant, SampleWindow};
use crate::models::Forecaster;

/// Hours per horizon segment.
pub const SEGMENT_HOURS: usize = 6;

/// One window's forecast next to its truth, both in original units.
#[derive(Debug, Clone, PartialEq)]
pub struct Forecast {
    pub station_id: String,
    pub pollutant: Pollutant,
    /// Timestamp of the first forecast step.
    pub first_target: NaiveDateTime,
    pub preds: Vec<f64>,
    pub truths: Vec<f64>,
}

impl Forecast {
    pub fn horizon(&self) -> usize {
        self.preds.len()
    }

    pub fn timestamp(&self, step: usize) -> NaiveDateTime {
        self.first_target + chrono::Duration::hours(step as i64)
    }
}

/// Runs `model` over `windows` and pairs each forecast with its targets.
pub fn forecast_windows(model: &Forecaster, windows: &[SampleWindow]) -> Result<Vec<Forecast>> {
    let preds = model.predict(windows)?;
    Ok(windows
        .iter()
        .zip(preds)
        .map(|(w, preds)| Forecast {
            station_id: w.station_id().to_string(),
            pollutant: w.pollutant(),
            first_target: w.data.timestamp(w.target_hours().start),
            preds,
            truths: w.target(),
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationMetrics {
    pub pollutant: Pollutant,
    pub station_id: String,
    pub smape: f64,
    pub rmse: f64,
    /// Number of (window, step) pairs.
    pub n: usize,
}

/// Metrics over steps `start_h..end_h` of the horizon, averaged over stations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentMetrics {
    pub pollutant: Pollutant,
    pub segment_index: usize,
    pub start_h: usize,
    pub end_h: usize,
    pub smape: f64,
    pub rmse: f64,
}

impl SegmentMetrics {
    pub fn steps(&self) -> usize {
        self.end_h - self.start_h
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PollutantSummary {
    pub pollutant: Pollutant,
    /// Mean of the per-station values.
    pub smape: f64,
    pub rmse: f64,
    pub stations: usize,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub epsilon: f64,
    pub horizon: usize,
    pub stations: Vec<StationMetrics>,
    pub overall: Vec<PollutantSummary>,
    pub segments: Vec<SegmentMetrics>,
}

type Groups<'a> = BTreeMap<(Pollutant, &'a str), Vec<&'a Forecast>>;

fn group(forecasts: &[Forecast]) -> Result<(usize, Groups<'_>)> {
    let first = forecasts
        .first()
        .ok_or_else(|| Error::contract("no forecasts to evaluate"))?;
    let tau = first.horizon();
    let mut groups: Groups = BTreeMap::new();
    for f in forecasts {
        if f.horizon() != tau || f.truths.len() != tau || tau == 0 {
            return Err(Error::contract(format!(
                "forecast for {} at {} has {} predictions and {} truths, expected {tau}",
                f.station_id,
                f.first_target,
                f.preds.len(),
                f.truths.len()
            )));
        }
        groups
            .entry((f.pollutant, f.station_id.as_str()))
            .or_default()
            .push(f);
    }
    Ok((tau, groups))
}

fn pairs(fs: &[&Forecast], steps: std::ops::Range<usize>) -> (Vec<f64>, Vec<f64>) {
    let mut p = Vec::new();
    let mut y = Vec::new();
    for f in fs {
        p.extend_from_slice(&f.preds[steps.clone()]);
        y.extend_from_slice(&f.truths[steps.clone()]);
    }
    (p, y)
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

/// Per-segment metrics for each pollutant: every station is scored on steps
/// `[k * segment_hours, (k + 1) * segment_hours)` and the station scores are
/// averaged.
pub fn segmental_metrics(
    forecasts: &[Forecast],
    segment_hours: usize,
    eps: f64,
) -> Result<Vec<SegmentMetrics>> {
    let (tau, groups) = group(forecasts)?;
    if segment_hours == 0 || tau % segment_hours != 0 {
        return Err(Error::config(format!(
            "horizon {tau} is not a multiple of the {segment_hours} h segment"
        )));
    }
    let mut per: BTreeMap<Pollutant, Vec<Vec<(f64, f64)>>> = BTreeMap::new();
    for ((pollutant, _), fs) in &groups {
        let mut scores = Vec::with_capacity(tau / segment_hours);
        for k in 0..tau / segment_hours {
            let (p, y) = pairs(fs, k * segment_hours..(k + 1) * segment_hours);
            scores.push((smape_metric(&p, &y, eps)?, rmse_metric(&p, &y)?));
        }
        per.entry(*pollutant).or_default().push(scores);
    }
    let mut out = Vec::new();
    for (pollutant, stations) in per {
        for k in 0..tau / segment_hours {
            out.push(SegmentMetrics {
                pollutant,
                segment_index: k,
                start_h: k * segment_hours,
                end_h: (k + 1) * segment_hours,
                smape: mean(stations.iter().map(|s| s[k].0)),
                rmse: mean(stations.iter().map(|s| s[k].1)),
            });
        }
    }
    Ok(out)
}

/// Per-station metrics over the whole horizon and their per-pollutant means.
pub fn station_metrics(
    forecasts: &[Forecast],
    eps: f64,
) -> Result<(Vec<StationMetrics>, Vec<PollutantSummary>)> {
    let (tau, groups) = group(forecasts)?;
    let mut stations = Vec::with_capacity(groups.len());
    for ((pollutant, id), fs) in &groups {
        let (p, y) = pairs(fs, 0..tau);
        stations.push(StationMetrics {
            pollutant: *pollutant,
            station_id: id.to_string(),
            smape: smape_metric(&p, &y, eps)?,
            rmse: rmse_metric(&p, &y)?,
            n: p.len(),
        });
    }
    let mut overall = Vec::new();
    for pollutant in Pollutant::ALL {
        let rows: Vec<_> = stations
            .iter()
            .filter(|s| s.pollutant == pollutant)
            .collect();
        if rows.is_empty() {
            continue;
        }
        overall.push(PollutantSummary {
            pollutant,
            smape: mean(rows.iter().map(|s| s.smape)),
            rmse: mean(rows.iter().map(|s| s.rmse)),
            stations: rows.len(),
            n: rows.iter().map(|s| s.n).sum(),
        });
    }
    Ok((stations, overall))
}

impl EvalResult {
    pub fn compute(forecasts: &[Forecast], segment_hours: usize, eps: f64) -> Result<Self> {
        let segments = segmental_metrics(forecasts, segment_hours, eps)?;
        let (stations, overall) = station_metrics(forecasts, eps)?;
        Ok(Self {
            epsilon: eps,
            horizon: forecasts[0].horizon(),
            stations,
            overall,
            segments,
        })
    }

    pub fn summary(&self, pollutant: Pollutant) -> Option<&PollutantSummary> {
        self.overall.iter().find(|s| s.pollutant == pollutant)
    }

    pub fn segments_of(&self, pollutant: Pollutant) -> Vec<&SegmentMetrics> {
        self.segments
            .iter()
            .filter(|s| s.pollutant == pollutant)
            .collect()
    }
}
