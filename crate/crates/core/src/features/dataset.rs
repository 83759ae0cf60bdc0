use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::{NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{
    assign_cells, read_station_registry, write_station_registry, GridSpec, StationRecord,
    StationSet,
};

pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";

/// Number of weather-condition categories (clear, cloudy, rain, haze).
pub const CONDITIONS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pollutant {
    Pm25,
    Pm10,
    O3,
}

impl Pollutant {
    pub const ALL: [Pollutant; 3] = [Pollutant::Pm25, Pollutant::Pm10, Pollutant::O3];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Pollutant::Pm25 => "pm25",
            Pollutant::Pm10 => "pm10",
            Pollutant::O3 => "o3",
        }
    }
}

impl fmt::Display for Pollutant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Pollutant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pm25" => Ok(Pollutant::Pm25),
            "pm10" => Ok(Pollutant::Pm10),
            "o3" => Ok(Pollutant::O3),
            _ => Err(Error::Lookup {
                kind: "pollutant",
                name: s.to_string(),
            }),
        }
    }
}

/// Hourly weather for one grid cell. Wind direction is where the wind blows
/// from, in degrees clockwise from north.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct WeatherObs {
    pub temperature: f64,
    pub pressure: f64,
    pub humidity: f64,
    pub wind_speed: f64,
    pub wind_direction: f64,
    pub condition_id: usize,
}

/// Hourly station readings and gridded weather over `[start, start + hours)`.
#[derive(Debug, Clone)]
pub struct RawDataset {
    pub grid: GridSpec,
    pub stations: StationSet,
    pub start: NaiveDateTime,
    pub hours: usize,
    /// Indexed `hour * stations + station`, pollutants in [`Pollutant::ALL`] order.
    pub pollution: Vec<[Option<f64>; 3]>,
    /// Indexed `hour * cells + row * cols + col`.
    pub weather: Vec<WeatherObs>,
}

impl RawDataset {
    pub fn timestamp(&self, hour: usize) -> NaiveDateTime {
        self.start + chrono::Duration::hours(hour as i64)
    }

    /// Hour index of `t`, if it is on the hour and inside the span.
    pub fn hour_of(&self, t: NaiveDateTime) -> Option<usize> {
        let d = (t - self.start).num_hours();
        if d < 0 || d as usize >= self.hours || self.timestamp(d as usize) != t {
            return None;
        }
        Some(d as usize)
    }

    /// Hour index of a split cutoff, clamped to the data span.
    pub fn cutoff_hour(&self, cutoff: NaiveDateTime) -> Result<usize> {
        let d = (cutoff - self.start).num_hours();
        if d < 0 {
            return Err(Error::config(format!(
                "train cutoff {cutoff} precedes the data start {}",
                self.start
            )));
        }
        Ok((d as usize).min(self.hours - 1))
    }

    pub fn reading(&self, hour: usize, station: usize, p: Pollutant) -> Option<f64> {
        self.pollution[hour * self.stations.len() + station][p.index()]
    }

    /// One hour of readings of `p` for every station.
    pub fn readings_at(&self, hour: usize, p: Pollutant) -> Vec<Option<f64>> {
        (0..self.stations.len())
            .map(|s| self.reading(hour, s, p))
            .collect()
    }

    pub fn weather_at(&self, hour: usize, row: usize, col: usize) -> &WeatherObs {
        &self.weather[hour * self.grid.cells() + row * self.grid.cols + col]
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        if self.pollution.len() != self.hours * self.stations.len() {
            return Err(Error::ingestion(
                "pollution table does not cover every hour and station",
            ));
        }
        if self.weather.len() != self.hours * self.grid.cells() {
            return Err(Error::ingestion(
                "weather table does not cover every hour and cell",
            ));
        }
        for w in &self.weather {
            if w.condition_id >= CONDITIONS {
                return Err(Error::ingestion(format!(
                    "condition id {} outside [0, {CONDITIONS})",
                    w.condition_id
                )));
            }
        }
        Ok(())
    }
}

/// Paths (relative to the manifest's directory), grid, and split of a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub stations: PathBuf,
    pub pollution: PathBuf,
    pub weather: PathBuf,
    /// Optional ground-truth grid series per pollutant.
    #[serde(default)]
    pub truth: BTreeMap<Pollutant, PathBuf>,
    pub grid: GridSpec,
    /// First hour of data.
    pub start: NaiveDateTime,
    /// Last hour of data, inclusive.
    pub end: NaiveDateTime,
    /// Last hour whose targets belong to the training split.
    pub train_cutoff: NaiveDateTime,
    pub pollutants: Vec<Pollutant>,
    /// Free-form provenance, e.g. the generator config and seed.
    #[serde(default)]
    pub provenance: serde_json::Value,
}

impl DatasetManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let m: Self = serde_json::from_str(&fs::read_to_string(path)?)?;
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        for t in [self.start, self.end, self.train_cutoff] {
            if !on_the_hour(t) {
                return Err(Error::config(format!("{t} is not aligned to the hour")));
            }
        }
        if self.end < self.start {
            return Err(Error::config("dataset end precedes start"));
        }
        if self.pollutants.is_empty() {
            return Err(Error::config("manifest selects no pollutant"));
        }
        Ok(())
    }

    pub fn hours(&self) -> usize {
        (self.end - self.start).num_hours() as usize + 1
    }

    /// Loads the referenced CSVs; `base` is the manifest's directory.
    pub fn load_dataset(&self, base: &Path) -> Result<RawDataset> {
        let records = read_station_registry(&base.join(&self.stations))?;
        let stations = assign_cells(&records, &self.grid)?;
        let hours = self.hours();
        let pollution = read_pollution(&base.join(&self.pollution), &stations, self.start, hours)?;
        let weather = read_weather(&base.join(&self.weather), &self.grid, self.start, hours)?;
        let ds = RawDataset {
            grid: self.grid.clone(),
            stations,
            start: self.start,
            hours,
            pollution,
            weather,
        };
        ds.validate()?;
        Ok(ds)
    }
}

pub fn on_the_hour(t: NaiveDateTime) -> bool {
    t.minute() == 0 && t.second() == 0 && t.nanosecond() == 0
}

pub fn parse_timestamp(s: &str) -> Result<NaiveDateTime> {
    let trimmed = s.trim().trim_end_matches('Z');
    NaiveDateTime::parse_from_str(trimmed, TIMESTAMP_FORMAT)
        .or_else(|_| NaiveDateTime::parse_from_str(trimmed, "%Y-%m-%d %H:%M:%S"))
        .map_err(|e| Error::ingestion(format!("bad timestamp {s:?}: {e}")))
}

pub fn format_timestamp(t: NaiveDateTime) -> String {
    t.format(TIMESTAMP_FORMAT).to_string()
}

fn hour_index(t: NaiveDateTime, start: NaiveDateTime, hours: usize) -> Result<Option<usize>> {
    if !on_the_hour(t) {
        return Err(Error::ingestion(format!(
            "timestamp {t} is not aligned to the hour"
        )));
    }
    let d = (t - start).num_hours();
    Ok((d >= 0 && (d as usize) < hours).then_some(d as usize))
}

fn parse_opt(field: &str, what: &str) -> Result<Option<f64>> {
    let f = field.trim();
    if f.is_empty() {
        return Ok(None);
    }
    let v: f64 = f
        .parse()
        .map_err(|_| Error::ingestion(format!("bad {what} value {f:?}")))?;
    if !v.is_finite() || v < 0.0 {
        return Err(Error::ingestion(format!(
            "{what} reading {v} must be finite and nonnegative"
        )));
    }
    Ok(Some(v))
}

/// Reads `timestamp,station_id,pm25,pm10,o3`. Rows outside the span are
/// skipped; absent rows and empty fields are missing readings.
pub fn read_pollution(
    path: &Path,
    stations: &StationSet,
    start: NaiveDateTime,
    hours: usize,
) -> Result<Vec<[Option<f64>; 3]>> {
    let index: HashMap<&str, usize> = stations
        .ids()
        .into_iter()
        .enumerate()
        .map(|(i, id)| (id, i))
        .collect();
    let mut out = vec![[None; 3]; hours * stations.len()];
    let mut rdr = csv::Reader::from_path(path)?;
    let headers = rdr.headers()?.clone();
    let expected = ["timestamp", "station_id", "pm25", "pm10", "o3"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(Error::ingestion(format!(
            "pollution header must be {}",
            expected.join(",")
        )));
    }
    for rec in rdr.records() {
        let rec = rec?;
        let t = parse_timestamp(&rec[0])?;
        let Some(h) = hour_index(t, start, hours)? else {
            continue;
        };
        let s = *index
            .get(&rec[1])
            .ok_or_else(|| Error::ingestion(format!("unknown station id {}", &rec[1])))?;
        let slot = &mut out[h * stations.len() + s];
        for (k, p) in Pollutant::ALL.iter().enumerate() {
            slot[k] = parse_opt(&rec[2 + k], p.as_str())?;
        }
    }
    Ok(out)
}

pub fn write_pollution(path: &Path, ds: &RawDataset) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["timestamp", "station_id", "pm25", "pm10", "o3"])?;
    let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for h in 0..ds.hours {
        let ts = format_timestamp(ds.timestamp(h));
        for (s, st) in ds.stations.iter().enumerate() {
            let r = ds.pollution[h * ds.stations.len() + s];
            w.write_record([ts.clone(), st.id.clone(), fmt(r[0]), fmt(r[1]), fmt(r[2])])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads `timestamp,row,col,temperature,pressure,humidity,wind_speed,wind_direction,condition_id`.
/// Every (hour, cell) inside the span must be present.
pub fn read_weather(
    path: &Path,
    grid: &GridSpec,
    start: NaiveDateTime,
    hours: usize,
) -> Result<Vec<WeatherObs>> {
    let cells = grid.cells();
    let mut out: Vec<Option<WeatherObs>> = vec![None; hours * cells];
    let mut rdr = csv::Reader::from_path(path)?;
    let expected = [
        "timestamp",
        "row",
        "col",
        "temperature",
        "pressure",
        "humidity",
        "wind_speed",
        "wind_direction",
        "condition_id",
    ];
    if rdr.headers()?.iter().collect::<Vec<_>>() != expected {
        return Err(Error::ingestion(format!(
            "weather header must be {}",
            expected.join(",")
        )));
    }
    for rec in rdr.records() {
        let rec = rec?;
        let t = parse_timestamp(&rec[0])?;
        let Some(h) = hour_index(t, start, hours)? else {
            continue;
        };
        let num = |i: usize| -> Result<f64> {
            let v: f64 = rec[i].trim().parse().map_err(|_| {
                Error::ingestion(format!("bad {} value {:?} at {t}", expected[i], &rec[i]))
            })?;
            if !v.is_finite() {
                return Err(Error::ingestion(format!(
                    "non-finite {} at {t}",
                    expected[i]
                )));
            }
            Ok(v)
        };
        let idx = |i: usize| -> Result<usize> {
            rec[i]
                .trim()
                .parse()
                .map_err(|_| Error::ingestion(format!("bad {} value {:?}", expected[i], &rec[i])))
        };
        let (r, c) = (idx(1)?, idx(2)?);
        if r >= grid.rows || c >= grid.cols {
            return Err(Error::ingestion(format!(
                "weather cell ({r}, {c}) outside grid"
            )));
        }
        let condition_id = idx(8)?;
        if condition_id >= CONDITIONS {
            return Err(Error::ingestion(format!(
                "condition id {condition_id} outside [0, {CONDITIONS})"
            )));
        }
        out[h * cells + r * grid.cols + c] = Some(WeatherObs {
            temperature: num(3)?,
            pressure: num(4)?,
            humidity: num(5)?,
            wind_speed: num(6)?,
            wind_direction: num(7)?,
            condition_id,
        });
    }
    out.into_iter()
        .enumerate()
        .map(|(i, w)| {
            w.ok_or_else(|| {
                let (h, cell) = (i / cells, i % cells);
                Error::ingestion(format!(
                    "weather missing for hour {h} cell ({}, {})",
                    cell / grid.cols,
                    cell % grid.cols
                ))
            })
        })
        .collect()
}

pub fn write_weather(path: &Path, ds: &RawDataset) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "timestamp",
        "row",
        "col",
        "temperature",
        "pressure",
        "humidity",
        "wind_speed",
        "wind_direction",
        "condition_id",
    ])?;
    for h in 0..ds.hours {
        let ts = format_timestamp(ds.timestamp(h));
        for r in 0..ds.grid.rows {
            for c in 0..ds.grid.cols {
                let o = ds.weather_at(h, r, c);
                w.write_record([
                    ts.clone(),
                    r.to_string(),
                    c.to_string(),
                    o.temperature.to_string(),
                    o.pressure.to_string(),
                    o.humidity.to_string(),
                    o.wind_speed.to_string(),
                    o.wind_direction.to_string(),
                    o.condition_id.to_string(),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes `timestamp,row,col,value` for an hour-major `[T, rows, cols]` series.
pub fn write_grid_series(
    path: &Path,
    grid: &GridSpec,
    start: NaiveDateTime,
    values: &[f64],
) -> Result<()> {
    let cells = grid.cells();
    if values.len() % cells != 0 {
        return Err(Error::dim(format!(
            "{} values do not tile a {}-cell grid",
            values.len(),
            cells
        )));
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["timestamp", "row", "col", "value"])?;
    for (h, frame) in values.chunks(cells).enumerate() {
        let ts = format_timestamp(start + chrono::Duration::hours(h as i64));
        for (i, v) in frame.iter().enumerate() {
            w.write_record([
                ts.clone(),
                (i / grid.cols).to_string(),
                (i % grid.cols).to_string(),
                v.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a `timestamp,row,col,value` series covering `hours` from `start`.
pub fn read_grid_series(
    path: &Path,
    grid: &GridSpec,
    start: NaiveDateTime,
    hours: usize,
) -> Result<Vec<f64>> {
    let cells = grid.cells();
    let mut out = vec![f64::NAN; hours * cells];
    let mut rdr = csv::Reader::from_path(path)?;
    for rec in rdr.records() {
        let rec = rec?;
        let t = parse_timestamp(&rec[0])?;
        let Some(h) = hour_index(t, start, hours)? else {
            continue;
        };
        let parse = |i: usize| {
            rec[i]
                .trim()
                .parse::<f64>()
                .map_err(|_| Error::ingestion(format!("bad grid value {:?}", &rec[i])))
        };
        let (r, c) = (parse(1)? as usize, parse(2)? as usize);
        if r >= grid.rows || c >= grid.cols {
            return Err(Error::ingestion(format!(
                "grid cell ({r}, {c}) outside grid"
            )));
        }
        out[h * cells + r * grid.cols + c] = parse(3)?;
    }
    if out.iter().any(|v| v.is_nan()) {
        return Err(Error::ingestion(format!(
            "grid series {} is incomplete",
            path.display()
        )));
    }
    Ok(out)
}

/// Writes the three CSVs of `ds` into `dir` under their conventional names
/// and returns their manifest paths.
pub fn write_dataset(dir: &Path, ds: &RawDataset) -> Result<(PathBuf, PathBuf, PathBuf)> {
    fs::create_dir_all(dir)?;
    let names = (
        PathBuf::from("stations.csv"),
        PathBuf::from("pollution.csv"),
        PathBuf::from("weather.csv"),
    );
    let records: Vec<StationRecord> = ds
        .stations
        .iter()
        .map(|s| StationRecord {
            station_id: s.id.clone(),
            latitude: s.lat,
            longitude: s.lon,
        })
        .collect();
    write_station_registry(&dir.join(&names.0), &records)?;
    write_pollution(&dir.join(&names.1), ds)?;
    write_weather(&dir.join(&names.2), ds)?;
    Ok(names)
}
