use std::collections::HashMap;

use super::clough_tocher::{barycentric, clough_tocher_eval, least_squares_gradient};
use super::delaunay::triangulate;
use super::{GridSpec, StationSet};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// One reading at a projected position (km) inside cell `(row, col)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScatterPoint {
    pub x: f64,
    pub y: f64,
    pub row: usize,
    pub col: usize,
    pub value: f64,
}

/// Station readings of one pollutant at one hour.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScatterField {
    pub points: Vec<ScatterPoint>,
}

impl ScatterField {
    pub fn new(points: Vec<ScatterPoint>) -> Result<Self> {
        for p in &points {
            if !p.value.is_finite() || p.value < 0.0 {
                return Err(Error::contract(format!(
                    "reading {} must be finite and nonnegative",
                    p.value
                )));
            }
            if !p.x.is_finite() || !p.y.is_finite() {
                return Err(Error::contract("reading position must be finite"));
            }
        }
        Ok(Self { points })
    }

    /// Field from per-station readings, skipping missing ones.
    pub fn from_stations(
        grid: &GridSpec,
        stations: &StationSet,
        readings: &[Option<f64>],
    ) -> Result<Self> {
        if readings.len() != stations.len() {
            return Err(Error::dim(format!(
                "{} readings for {} stations",
                readings.len(),
                stations.len()
            )));
        }
        let points = stations
            .iter()
            .zip(readings)
            .filter_map(|(s, r)| {
                r.map(|value| {
                    let (x, y) = grid.project(s.lat, s.lon);
                    ScatterPoint {
                        x,
                        y,
                        row: s.row,
                        col: s.col,
                        value,
                    }
                })
            })
            .collect();
        Self::new(points)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[derive(Debug, Clone)]
enum CellRule {
    /// Mean of the readings at these unique sites.
    Station(Vec<usize>),
    Triangle {
        tri: usize,
        lambda: [f64; 3],
    },
    /// Normalised inverse-distance weights over all sites.
    Idw(Vec<f64>),
}

/// Geometry of an interpolation problem, reusable across hours that share the
/// same set of reporting positions.
///
/// Sites are sorted canonically and co-located readings merged, so the result
/// does not depend on the order readings are supplied in.
#[derive(Debug, Clone)]
pub struct Interpolator {
    rows: usize,
    cols: usize,
    /// Unique site positions in canonical order.
    sites: Vec<(f64, f64)>,
    /// Input indices merged into each site.
    members: Vec<Vec<usize>>,
    n_inputs: usize,
    triangles: Vec<[usize; 3]>,
    /// Delaunay neighbours of each site, ascending.
    neighbors: Vec<Vec<usize>>,
    rules: Vec<CellRule>,
}

impl Interpolator {
    /// `points` are projected positions with their cells; values come later.
    pub fn new(grid: &GridSpec, points: &[((f64, f64), (usize, usize))]) -> Result<Self> {
        grid.validate()?;
        if points.is_empty() {
            return Err(Error::contract("interpolation needs at least one reading"));
        }
        let mut order: Vec<usize> = (0..points.len()).collect();
        order.sort_by(|&a, &b| {
            let (pa, pb) = (points[a].0, points[b].0);
            pa.0.total_cmp(&pb.0).then(pa.1.total_cmp(&pb.1))
        });
        let mut sites: Vec<(f64, f64)> = Vec::new();
        let mut members: Vec<Vec<usize>> = Vec::new();
        for &i in &order {
            let p = points[i].0;
            if sites.last() == Some(&p) {
                members.last_mut().expect("non-empty").push(i);
            } else {
                sites.push(p);
                members.push(vec![i]);
            }
        }

        let triangles = if sites.len() >= 3 {
            triangulate(&sites)?
        } else {
            Vec::new()
        };
        let mut neighbors = vec![Vec::new(); sites.len()];
        for t in &triangles {
            for a in 0..3 {
                for b in 0..3 {
                    if a != b {
                        neighbors[t[a]].push(t[b]);
                    }
                }
            }
        }
        for n in &mut neighbors {
            n.sort_unstable();
            n.dedup();
        }

        let mut station_cells: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
        for (s, m) in members.iter().enumerate() {
            for &i in m {
                let cell = points[i].1;
                if cell.0 >= grid.rows || cell.1 >= grid.cols {
                    return Err(Error::Bounds(format!("reading cell {cell:?} outside grid")));
                }
                let e = station_cells.entry(cell).or_default();
                if !e.contains(&s) {
                    e.push(s);
                }
            }
        }

        let mut rules = Vec::with_capacity(grid.cells());
        for r in 0..grid.rows {
            for c in 0..grid.cols {
                if let Some(s) = station_cells.get(&(r, c)) {
                    rules.push(CellRule::Station(s.clone()));
                    continue;
                }
                let q = grid.cell_center(r, c);
                let mut best: Option<(usize, [f64; 3], f64)> = None;
                for (ti, t) in triangles.iter().enumerate() {
                    let l = barycentric(t.map(|i| sites[i]), q);
                    let worst = l[0].min(l[1]).min(l[2]);
                    if worst >= -1e-9 && best.is_none_or(|b| worst > b.2) {
                        best = Some((ti, l, worst));
                    }
                }
                rules.push(match best {
                    Some((tri, lambda, _)) => CellRule::Triangle { tri, lambda },
                    None => CellRule::Idw(idw_weights(&sites, q)),
                });
            }
        }

        Ok(Self {
            rows: grid.rows,
            cols: grid.cols,
            sites,
            members,
            n_inputs: points.len(),
            triangles,
            neighbors,
            rules,
        })
    }

    /// True when cells inside the hull use the cubic interpolant rather than
    /// global inverse-distance weighting.
    pub fn is_cubic(&self) -> bool {
        !self.triangles.is_empty()
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn sites(&self) -> &[(f64, f64)] {
        &self.sites
    }

    /// Fills the `[rows, cols]` grid from values in the construction order.
    pub fn evaluate(&self, values: &[f64]) -> Result<Tensor> {
        if values.len() != self.n_inputs {
            return Err(Error::dim(format!(
                "{} values for {} readings",
                values.len(),
                self.n_inputs
            )));
        }
        let site_values: Vec<f64> = self
            .members
            .iter()
            .map(|m| {
                let mut v: Vec<f64> = m.iter().map(|&i| values[i]).collect();
                v.sort_by(f64::total_cmp);
                v.iter().sum::<f64>() / v.len() as f64
            })
            .collect();
        let grads: Vec<(f64, f64)> = if self.is_cubic() {
            (0..self.sites.len())
                .map(|s| {
                    let nb: Vec<((f64, f64), f64)> = self.neighbors[s]
                        .iter()
                        .map(|&j| (self.sites[j], site_values[j]))
                        .collect();
                    least_squares_gradient(self.sites[s], site_values[s], &nb).unwrap_or((0.0, 0.0))
                })
                .collect()
        } else {
            Vec::new()
        };

        let mut out = Vec::with_capacity(self.rules.len());
        for rule in &self.rules {
            let v = match rule {
                CellRule::Station(s) => {
                    s.iter().map(|&i| site_values[i]).sum::<f64>() / s.len() as f64
                }
                CellRule::Triangle { tri, lambda } => {
                    let t = self.triangles[*tri];
                    clough_tocher_eval(
                        t.map(|i| self.sites[i]),
                        t.map(|i| site_values[i]),
                        t.map(|i| grads[i]),
                        *lambda,
                    )
                }
                CellRule::Idw(w) => w.iter().zip(&site_values).map(|(w, v)| w * v).sum(),
            };
            out.push(v.max(0.0));
        }
        Tensor::new(vec![self.rows, self.cols], out)
    }
}

fn idw_weights(sites: &[(f64, f64)], q: (f64, f64)) -> Vec<f64> {
    let d2: Vec<f64> = sites
        .iter()
        .map(|s| (s.0 - q.0).powi(2) + (s.1 - q.1).powi(2))
        .collect();
    if let Some(hit) = d2.iter().position(|&d| d == 0.0) {
        let mut w = vec![0.0; sites.len()];
        w[hit] = 1.0;
        return w;
    }
    // power 2 on distance is 1 / d^2
    let raw: Vec<f64> = d2.iter().map(|d| 1.0 / d).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

/// Fills every cell of `grid` from one hour of readings.
pub fn interpolate_grid(field: &ScatterField, grid: &GridSpec) -> Result<Tensor> {
    if field.is_empty() {
        return Err(Error::contract("cannot interpolate an empty field"));
    }
    let pts: Vec<_> = field
        .points
        .iter()
        .map(|p| ((p.x, p.y), (p.row, p.col)))
        .collect();
    let values: Vec<f64> = field.points.iter().map(|p| p.value).collect();
    Interpolator::new(grid, &pts)?.evaluate(&values)
}

/// Interpolates each hour of `readings[hour][station]` independently and
/// returns `[T, rows, cols]`.
///
/// Hours without any reading are filled per cell by linear interpolation in
/// time between the nearest valid hours; gaps at either end of the series
/// repeat the nearest valid hour.
pub fn fill_series(
    readings: &[Vec<Option<f64>>],
    stations: &StationSet,
    grid: &GridSpec,
) -> Result<Tensor> {
    let hours = readings.len();
    if hours == 0 {
        return Err(Error::contract("fill_series needs at least one hour"));
    }
    let positions = stations.positions(grid);
    let mut cache: HashMap<Vec<bool>, Interpolator> = HashMap::new();
    let cells = grid.cells();
    let mut frames: Vec<Option<Vec<f64>>> = Vec::with_capacity(hours);
    for (h, row) in readings.iter().enumerate() {
        if row.len() != stations.len() {
            return Err(Error::dim(format!(
                "hour {h} has {} readings for {} stations",
                row.len(),
                stations.len()
            )));
        }
        let mask: Vec<bool> = row.iter().map(Option::is_some).collect();
        if !mask.contains(&true) {
            frames.push(None);
            continue;
        }
        let interp = match cache.get(&mask) {
            Some(i) => i,
            None => {
                let pts: Vec<_> = stations
                    .iter()
                    .zip(&positions)
                    .zip(&mask)
                    .filter(|(_, &m)| m)
                    .map(|((s, &p), _)| (p, (s.row, s.col)))
                    .collect();
                cache
                    .entry(mask.clone())
                    .or_insert(Interpolator::new(grid, &pts)?)
            }
        };
        let values: Vec<f64> = row.iter().flatten().copied().collect();
        if let Some(bad) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::ingestion(format!(
                "hour {h} has invalid reading {bad}"
            )));
        }
        frames.push(Some(interp.evaluate(&values)?.into_data()));
    }

    let valid: Vec<usize> = (0..hours).filter(|&h| frames[h].is_some()).collect();
    let (Some(&first), Some(&last)) = (valid.first(), valid.last()) else {
        return Err(Error::ingestion("no hour has any reading"));
    };
    if first > 0 || last + 1 < hours {
        log::warn!(
            "series boundary gap: hours [0, {first}) and ({last}, {hours}) held at nearest valid hour"
        );
    }
    let mut out = Vec::with_capacity(hours * cells);
    let mut next = 0;
    for h in 0..hours {
        if let Some(f) = &frames[h] {
            out.extend_from_slice(f);
            continue;
        }
        while next < valid.len() && valid[next] < h {
            next += 1;
        }
        let after = valid.get(next).copied();
        let before = next.checked_sub(1).map(|i| valid[i]);
        match (before, after) {
            (Some(b), Some(a)) => {
                let w = (h - b) as f64 / (a - b) as f64;
                let (fb, fa) = (
                    frames[b].as_ref().expect("valid"),
                    frames[a].as_ref().expect("valid"),
                );
                out.extend(fb.iter().zip(fa).map(|(x, y)| x + w * (y - x)));
            }
            (Some(b), None) => out.extend_from_slice(frames[b].as_ref().expect("valid")),
            (None, Some(a)) => out.extend_from_slice(frames[a].as_ref().expect("valid")),
            (None, None) => unreachable!("at least one valid hour"),
        }
    }
    Tensor::new(vec![hours, grid.rows, grid.cols], out)
}
