use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde_json::json;

use super::bands::{coverage, BandPoint};
use super::results::EvalResult;
use super::svg::{band_chart, bar_chart};
use crate::error::{Error, Result};
use crate::features::format_timestamp;

/// Longest span drawn in one band chart; the CSV always has everything.
pub const CHART_HOURS: usize = 14 * 24;

/// Writes `metrics.csv`, `segments.csv`, `bands.csv`, `report.json` and the
/// SVG charts into `dir`. `run` is embedded verbatim in `report.json`.
/// Returns the written paths in order.
pub fn emit_report(
    result: &EvalResult,
    bands: &[BandPoint],
    dir: &Path,
    run: &serde_json::Value,
) -> Result<Vec<PathBuf>> {
    if result.stations.is_empty() {
        return Err(Error::contract("nothing to report"));
    }
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();

    let path = dir.join("metrics.csv");
    let mut f = fs::File::create(&path)?;
    writeln!(f, "pollutant,station_id,smape,rmse,n")?;
    for s in &result.stations {
        writeln!(
            f,
            "{},{},{},{},{}",
            s.pollutant, s.station_id, s.smape, s.rmse, s.n
        )?;
    }
    written.push(path);

    let path = dir.join("segments.csv");
    let mut f = fs::File::create(&path)?;
    writeln!(f, "pollutant,segment_index,start_h,end_h,smape,rmse")?;
    for s in &result.segments {
        writeln!(
            f,
            "{},{},{},{},{},{}",
            s.pollutant, s.segment_index, s.start_h, s.end_h, s.smape, s.rmse
        )?;
    }
    written.push(path);

    let path = dir.join("bands.csv");
    let mut f = fs::File::create(&path)?;
    writeln!(f, "timestamp,station_id,pollutant,truth,mu,sigma,covered")?;
    for b in bands {
        writeln!(
            f,
            "{},{},{},{},{},{},{}",
            format_timestamp(b.timestamp),
            b.station_id,
            b.pollutant,
            b.truth,
            b.mu,
            b.sigma,
            u8::from(b.covered)
        )?;
    }
    written.push(path);

    let path = dir.join("report.json");
    let doc = json!({
        "epsilon": result.epsilon,
        "horizon": result.horizon,
        "overall": result.overall,
        "band_coverage": if bands.is_empty() { None } else { Some(coverage(bands)) },
        "run": run,
    });
    fs::write(&path, serde_json::to_string_pretty(&doc)? + "\n")?;
    written.push(path);

    for summary in &result.overall {
        let segs = result.segments_of(summary.pollutant);
        let labels: Vec<String> = segs
            .iter()
            .map(|s| format!("{}-{}h", s.start_h, s.end_h))
            .collect();
        let values: Vec<f64> = segs.iter().map(|s| s.smape).collect();
        let path = dir.join(format!("segments_{}.svg", summary.pollutant));
        fs::write(
            &path,
            bar_chart(
                &format!("{} SMAPE by horizon segment", summary.pollutant),
                &labels,
                &values,
            ),
        )?;
        written.push(path);
    }

    // bands are sorted by (pollutant, station, time); chart each run
    let mut i = 0;
    while i < bands.len() {
        let key = (bands[i].pollutant, &bands[i].station_id);
        let mut j = i;
        while j < bands.len() && (bands[j].pollutant, &bands[j].station_id) == key {
            j += 1;
        }
        let span = &bands[i..j.min(i + CHART_HOURS)];
        let truth: Vec<f64> = span.iter().map(|b| b.truth).collect();
        let mu: Vec<f64> = span.iter().map(|b| b.mu).collect();
        let sigma: Vec<f64> = span.iter().map(|b| b.sigma).collect();
        let path = dir.join(format!("bands_{}_{}.svg", key.0, sanitize(key.1)));
        let title = format!(
            "{} at {} from {}",
            key.0,
            key.1,
            format_timestamp(span[0].timestamp)
        );
        fs::write(&path, band_chart(&title, &truth, &mu, &sigma))?;
        written.push(path);
        i = j;
    }
    Ok(written)
}

fn sanitize(id: &str) -> String {
    id.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}
