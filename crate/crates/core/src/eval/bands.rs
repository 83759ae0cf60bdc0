use std::collections::BTreeMap;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use super::results::Forecast;
use crate::features::Pollutant;

/// Spread of every forecast made for one station-hour.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandPoint {
    pub timestamp: NaiveDateTime,
    pub station_id: String,
    pub pollutant: Pollutant,
    pub truth: f64,
    pub mu: f64,
    /// Population standard deviation; zero for a single forecast.
    pub sigma: f64,
    /// How many forecasts covered this hour.
    pub count: usize,
    /// `|truth - mu| <= 2 sigma`.
    pub covered: bool,
}

/// Collects the overlapping forecasts of each (pollutant, station, hour) and
/// reduces them to mean and spread. Output is sorted by that key.
pub fn band_aggregate(forecasts: &[Forecast]) -> Vec<BandPoint> {
    let mut acc: BTreeMap<(Pollutant, &str, NaiveDateTime), (f64, Vec<f64>)> = BTreeMap::new();
    for f in forecasts {
        for (k, (&p, &y)) in f.preds.iter().zip(&f.truths).enumerate() {
            acc.entry((f.pollutant, f.station_id.as_str(), f.timestamp(k)))
                .or_insert_with(|| (y, Vec::new()))
                .1
                .push(p);
        }
    }
    acc.into_iter()
        .map(|((pollutant, id, timestamp), (truth, ps))| {
            let n = ps.len() as f64;
            let mu = ps.iter().sum::<f64>() / n;
            let var = ps.iter().map(|p| (p - mu) * (p - mu)).sum::<f64>() / n;
            let sigma = var.sqrt();
            BandPoint {
                timestamp,
                station_id: id.to_string(),
                pollutant,
                truth,
                mu,
                sigma,
                count: ps.len(),
                covered: (truth - mu).abs() <= 2.0 * sigma,
            }
        })
        .collect()
}

/// Fraction of points whose truth lies inside the band.
pub fn coverage(points: &[BandPoint]) -> f64 {
    if points.is_empty() {
        return 0.0;
    }
    points.iter().filter(|p| p.covered).count() as f64 / points.len() as f64
}
