//! Grid partition, station registry, and the inferential predictor that
//! fills unmonitored cells from scattered station readings.

mod clough_tocher;
mod delaunay;
mod interpolate;
mod neighbor;

pub use clough_tocher::{clough_tocher_eval, least_squares_gradient};
pub use delaunay::triangulate;
pub use interpolate::{fill_series, interpolate_grid, Interpolator, ScatterField, ScatterPoint};
pub use neighbor::{neighbor_aggregate, sector_of, SECTORS};

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mean Earth radius in km.
pub const EARTH_RADIUS_KM: f64 = 6371.0088;

/// An `rows x cols` lattice of square cells in latitude/longitude whose
/// south-west corner is the origin. Row 0 is the southernmost row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub rows: usize,
    pub cols: usize,
    pub origin_lat: f64,
    pub origin_lon: f64,
    #[serde(default = "default_cell_deg")]
    pub cell_deg: f64,
}

fn default_cell_deg() -> f64 {
    0.1
}

impl GridSpec {
    pub fn new(
        rows: usize,
        cols: usize,
        origin_lat: f64,
        origin_lon: f64,
        cell_deg: f64,
    ) -> Result<Self> {
        let g = Self {
            rows,
            cols,
            origin_lat,
            origin_lon,
            cell_deg,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::config(format!(
                "grid must be non-empty, got {}x{}",
                self.rows, self.cols
            )));
        }
        if !(self.cell_deg > 0.0 && self.cell_deg.is_finite()) {
            return Err(Error::config(format!(
                "cell size must be positive, got {}",
                self.cell_deg
            )));
        }
        if !self.origin_lat.is_finite() || !self.origin_lon.is_finite() {
            return Err(Error::config("grid origin must be finite"));
        }
        Ok(())
    }

    pub fn cells(&self) -> usize {
        self.rows * self.cols
    }

    /// Cell holding a coordinate, by floor division of the offset.
    pub fn cell_of(&self, lat: f64, lon: f64) -> Option<(usize, usize)> {
        // absorb representation error such as 0.3 / 0.1 = 2.9999999999999996
        let r = ((lat - self.origin_lat) / self.cell_deg + 1e-9).floor();
        let c = ((lon - self.origin_lon) / self.cell_deg + 1e-9).floor();
        if r < 0.0 || c < 0.0 || r >= self.rows as f64 || c >= self.cols as f64 {
            return None;
        }
        Some((r as usize, c as usize))
    }

    fn ref_lat_rad(&self) -> f64 {
        (self.origin_lat + 0.5 * self.rows as f64 * self.cell_deg).to_radians()
    }

    /// Equirectangular projection to km east/north of the origin.
    pub fn project(&self, lat: f64, lon: f64) -> (f64, f64) {
        let k = EARTH_RADIUS_KM * std::f64::consts::PI / 180.0;
        let x = (lon - self.origin_lon) * k * self.ref_lat_rad().cos();
        let y = (lat - self.origin_lat) * k;
        (x, y)
    }

    pub fn cell_center_latlon(&self, row: usize, col: usize) -> (f64, f64) {
        (
            self.origin_lat + (row as f64 + 0.5) * self.cell_deg,
            self.origin_lon + (col as f64 + 0.5) * self.cell_deg,
        )
    }

    /// Projected centre of a cell.
    pub fn cell_center(&self, row: usize, col: usize) -> (f64, f64) {
        let (lat, lon) = self.cell_center_latlon(row, col);
        self.project(lat, lon)
    }
}

/// Planar distance in km between projected points.
pub fn distance_km(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - b.0).hypot(a.1 - b.1)
}

/// A row of the station registry CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationRecord {
    pub station_id: String,
    pub latitude: f64,
    pub longitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Station {
    pub id: String,
    pub lat: f64,
    pub lon: f64,
    pub row: usize,
    pub col: usize,
}

/// Stations mapped onto a grid; ids are unique and non-empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationSet {
    stations: Vec<Station>,
}

impl StationSet {
    pub fn len(&self) -> usize {
        self.stations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stations.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Station> {
        self.stations.iter()
    }

    pub fn get(&self, i: usize) -> &Station {
        &self.stations[i]
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.stations.iter().position(|s| s.id == id)
    }

    pub fn ids(&self) -> Vec<&str> {
        self.stations.iter().map(|s| s.id.as_str()).collect()
    }

    /// Projected positions in km.
    pub fn positions(&self, grid: &GridSpec) -> Vec<(f64, f64)> {
        self.stations
            .iter()
            .map(|s| grid.project(s.lat, s.lon))
            .collect()
    }
}

/// Maps each station to the cell containing it.
pub fn assign_cells(stations: &[StationRecord], grid: &GridSpec) -> Result<StationSet> {
    grid.validate()?;
    if stations.is_empty() {
        return Err(Error::ingestion("station registry is empty"));
    }
    let mut out: Vec<Station> = Vec::with_capacity(stations.len());
    for s in stations {
        if out.iter().any(|o| o.id == s.station_id) {
            return Err(Error::ingestion(format!(
                "duplicate station id {}",
                s.station_id
            )));
        }
        let (row, col) = grid.cell_of(s.latitude, s.longitude).ok_or_else(|| {
            Error::ingestion(format!(
                "station {} at ({}, {}) lies outside the grid",
                s.station_id, s.latitude, s.longitude
            ))
        })?;
        out.push(Station {
            id: s.station_id.clone(),
            lat: s.latitude,
            lon: s.longitude,
            row,
            col,
        });
    }
    Ok(StationSet { stations: out })
}

/// Reads `station_id,latitude,longitude`.
pub fn read_station_registry(path: &Path) -> Result<Vec<StationRecord>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for rec in rdr.deserialize() {
        out.push(rec?);
    }
    Ok(out)
}

pub fn write_station_registry(path: &Path, stations: &[StationRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for s in stations {
        w.serialize(s)?;
    }
    w.flush()?;
    Ok(())
}
