//! Synthetic pollutant fields from advection–diffusion with diurnal sources,
//! sampled by virtual stations and written in the pipeline's CSV formats.

mod transport;

pub use transport::Transport;

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use chrono::{Datelike, NaiveDate, NaiveDateTime, Timelike};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{
    write_dataset, write_grid_series, DatasetManifest, Pollutant, RawDataset, WeatherObs,
};
use crate::grid::{assign_cells, GridSpec, StationRecord};

/// An emitting cell. Emission is `rate * (1 + amplitude * cos(2π (hour - peak_hour) / 24))`
/// µg/m³ per hour, scaled per pollutant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Source {
    pub row: usize,
    pub col: usize,
    pub rate: f64,
    #[serde(default)]
    pub amplitude: f64,
    #[serde(default)]
    pub peak_hour: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub name: String,
    pub grid: GridSpec,
    pub start: NaiveDateTime,
    pub hours: usize,
    /// Last hour whose targets go to the training split.
    pub train_cutoff: NaiveDateTime,
    pub stations: usize,
    pub placement_seed: u64,
    pub seed: u64,
    /// km²/h.
    pub diffusion: f64,
    /// Prevailing wind (east, north) in m/s.
    pub wind_mean: (f64, f64),
    /// Amplitude (m/s) of a periodic swing of the wind vector.
    pub wind_amplitude: f64,
    pub wind_period_h: f64,
    /// Standard deviation (m/s) of the slowly varying random wind component.
    pub wind_noise: f64,
    /// First-order removal rate, 1/h, before weather effects.
    pub decay: f64,
    pub sources: Vec<Source>,
    /// Spatially uniform background emission, µg/m³ per hour.
    pub background: f64,
    pub initial: f64,
    /// Station measurement noise std, µg/m³; clipped at ±3σ.
    pub noise_std: f64,
    /// Probability that a single station reading is missing.
    pub missing_rate: f64,
    pub spin_up_hours: usize,
    /// Transport sub-steps per hour; chosen automatically when absent.
    #[serde(default)]
    pub substeps: Option<usize>,
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        if self.hours == 0 || self.stations == 0 {
            return Err(Error::config("synthetic data needs hours and stations"));
        }
        let nonneg = [
            ("diffusion", self.diffusion),
            ("decay", self.decay),
            ("background", self.background),
            ("initial", self.initial),
            ("noise_std", self.noise_std),
            ("wind_noise", self.wind_noise),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(format!(
                    "{name} must be finite and nonnegative, got {v}"
                )));
            }
        }
        if !(0.0..1.0).contains(&self.missing_rate) {
            return Err(Error::config("missing_rate must lie in [0, 1)"));
        }
        for s in &self.sources {
            if s.row >= self.grid.rows || s.col >= self.grid.cols {
                return Err(Error::config(format!(
                    "source at ({}, {}) outside grid",
                    s.row, s.col
                )));
            }
            if !(s.rate >= 0.0) || !(0.0..=1.0).contains(&s.amplitude) {
                return Err(Error::config(
                    "source rates must be nonnegative with amplitude in [0, 1]",
                ));
            }
        }
        if self.substeps == Some(0) {
            return Err(Error::config("substeps must be positive"));
        }
        Ok(())
    }

    pub fn end(&self) -> NaiveDateTime {
        self.start + chrono::Duration::hours(self.hours as i64 - 1)
    }

    pub fn transport(&self) -> Result<Transport> {
        let (x1, y1) = self.grid.project(
            self.grid.origin_lat + self.grid.cell_deg,
            self.grid.origin_lon + self.grid.cell_deg,
        );
        Transport::new(self.grid.rows, self.grid.cols, x1, y1)
    }

    /// Worst-case wind speed the generator can produce, km/h per axis.
    fn wind_bound_kmh(&self) -> (f64, f64) {
        let swing = self.wind_amplitude + 4.0 * self.wind_noise;
        (
            (self.wind_mean.0.abs() + swing) * 3.6,
            (self.wind_mean.1.abs() + swing) * 3.6,
        )
    }
}

fn dt(y: i32, m: u32, d: u32, h: u32) -> NaiveDateTime {
    NaiveDate::from_ymd_opt(y, m, d)
        .and_then(|x| x.and_hms_opt(h, 0, 0))
        .expect("valid preset date")
}

fn preset_sources(grid: &GridSpec, count: usize, seed: u64) -> Vec<Source> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0f_50u64);
    (0..count)
        .map(|k| Source {
            row: rng.random_range(0..grid.rows),
            col: rng.random_range(0..grid.cols),
            rate: rng.random_range(2.0..6.0),
            amplitude: rng.random_range(0.3..0.8),
            // alternate morning and evening peaks
            peak_hour: if k % 2 == 0 { 8.0 } else { 19.0 },
        })
        .collect()
}

/// Named configurations: `tiny` and `beijing-like`.
pub fn scenario_presets() -> BTreeMap<&'static str, SynthConfig> {
    let tiny_grid = GridSpec::new(6, 6, 39.8, 116.2, 0.1).expect("valid grid");
    let tiny = SynthConfig {
        name: "tiny".into(),
        sources: preset_sources(&tiny_grid, 3, 1),
        grid: tiny_grid,
        start: dt(2018, 1, 1, 0),
        hours: 40 * 24,
        train_cutoff: dt(2018, 1, 31, 23),
        stations: 5,
        placement_seed: 3,
        seed: 0,
        diffusion: 6.0,
        wind_mean: (1.0, -0.5),
        wind_amplitude: 1.5,
        wind_period_h: 24.0 * 5.0,
        wind_noise: 1.2,
        decay: 0.03,
        background: 1.2,
        initial: 30.0,
        noise_std: 1.0,
        missing_rate: 0.005,
        spin_up_hours: 96,
        substeps: None,
    };
    let bj_grid = GridSpec::new(11, 12, 39.45, 115.85, 0.1).expect("valid grid");
    let beijing = SynthConfig {
        name: "beijing-like".into(),
        sources: preset_sources(&bj_grid, 12, 7),
        grid: bj_grid,
        start: dt(2017, 1, 1, 0),
        hours: 516 * 24,
        train_cutoff: dt(2018, 4, 30, 23),
        stations: 35,
        placement_seed: 35,
        seed: 0,
        diffusion: 8.0,
        wind_mean: (1.2, -0.8),
        wind_amplitude: 2.0,
        wind_period_h: 24.0 * 7.0,
        wind_noise: 1.5,
        decay: 0.025,
        background: 1.4,
        initial: 40.0,
        noise_std: 2.0,
        missing_rate: 0.01,
        spin_up_hours: 168,
        substeps: None,
    };
    BTreeMap::from([("tiny", tiny), ("beijing-like", beijing)])
}

pub fn preset(name: &str) -> Result<SynthConfig> {
    scenario_presets()
        .remove(name)
        .ok_or_else(|| Error::Lookup {
            kind: "preset",
            name: name.to_string(),
        })
}

/// Generated dataset plus the true hourly fields.
#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub config: SynthConfig,
    pub dataset: RawDataset,
    /// Hour-major `[hours, rows, cols]` true concentration per pollutant,
    /// in [`Pollutant::ALL`] order.
    pub truth: [Vec<f64>; 3],
}

/// Per-pollutant scaling of the shared emission inventory.
struct Species {
    source_scale: f64,
    background_scale: f64,
    extra_decay: f64,
    /// Daytime photochemical production instead of emissions.
    photochemical: bool,
}

const SPECIES: [Species; 3] = [
    Species {
        source_scale: 1.0,
        background_scale: 1.0,
        extra_decay: 0.0,
        photochemical: false,
    },
    Species {
        source_scale: 1.4,
        background_scale: 1.8,
        extra_decay: 0.01,
        photochemical: false,
    },
    Species {
        source_scale: 0.0,
        background_scale: 0.5,
        extra_decay: 0.05,
        photochemical: true,
    },
];

/// Global weather state for one hour.
struct Synoptic {
    wind: (f64, f64),
    temp_anom: f64,
    pressure_anom: f64,
    humidity_anom: f64,
}

fn ar1(prev: f64, rho: f64, rng: &mut ChaCha8Rng, n: &Normal<f64>) -> f64 {
    rho * prev + (1.0 - rho * rho).sqrt() * n.sample(rng)
}

fn cell_weather(
    cfg: &SynthConfig,
    t: NaiveDateTime,
    s: &Synoptic,
    row: usize,
    col: usize,
) -> WeatherObs {
    let doy = t.ordinal0() as f64;
    let hour = t.hour() as f64;
    let seasonal = -14.0 * (2.0 * PI * (doy - 15.0) / 365.0).cos();
    let diurnal = 5.0 * (2.0 * PI * (hour - 9.0) / 24.0).sin();
    let temperature =
        12.0 + seasonal + diurnal - 0.3 * row as f64 + 0.1 * col as f64 + 2.0 * s.temp_anom;
    let pressure =
        1013.0 + 10.0 * (2.0 * PI * doy / 365.0).cos() + 6.0 * s.pressure_anom - 0.2 * row as f64;
    let humidity = (50.0 + 20.0 * s.humidity_anom - 0.8 * (diurnal + 2.0 * s.temp_anom)
        + 0.5 * row as f64)
        .clamp(5.0, 100.0);
    let speed = (s.wind.0 * s.wind.0 + s.wind.1 * s.wind.1).sqrt()
        * (1.0 + 0.02 * (row + col) as f64 / (cfg.grid.rows + cfg.grid.cols) as f64);
    // direction the wind blows from
    let direction = (-s.wind.0).atan2(-s.wind.1).to_degrees().rem_euclid(360.0);
    let condition_id = if humidity > 85.0 {
        2
    } else if humidity > 70.0 && speed < 2.0 {
        3
    } else if humidity > 60.0 {
        1
    } else {
        0
    };
    WeatherObs {
        temperature,
        pressure,
        humidity,
        wind_speed: speed,
        wind_direction: direction,
        condition_id,
    }
}

/// Runs the simulation and samples stations. Deterministic given the config.
pub fn generate(cfg: &SynthConfig) -> Result<SynthOutput> {
    cfg.validate()?;
    let tr = cfg.transport()?;
    let (ub, vb) = cfg.wind_bound_kmh();
    let substeps = match cfg.substeps {
        Some(n) => {
            tr.check_dt(1.0 / n as f64, ub, vb, cfg.diffusion)?;
            n
        }
        None => (1.0 / (0.9 * tr.max_stable_dt(ub, vb, cfg.diffusion)))
            .ceil()
            .max(1.0) as usize,
    };
    let sub_dt = 1.0 / substeps as f64;

    let grid = &cfg.grid;
    let cells = grid.cells();
    let records = place_stations(cfg);
    let stations = assign_cells(&records, grid)?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let rho = (-1.0f64 / 36.0).exp();
    let (mut au, mut av, mut at, mut ap, mut ah) = (0.0, 0.0, 0.0, 0.0, 0.0);

    let mut fields: Vec<Vec<f64>> = (0..3).map(|_| vec![cfg.initial; cells]).collect();
    let mut scratch = vec![0.0; cells];
    let mut truth: [Vec<f64>; 3] = std::array::from_fn(|_| Vec::with_capacity(cfg.hours * cells));
    let mut weather = Vec::with_capacity(cfg.hours * cells);
    let first = cfg.start - chrono::Duration::hours(cfg.spin_up_hours as i64);

    for step in 0..(cfg.spin_up_hours + cfg.hours) {
        let t = first + chrono::Duration::hours(step as i64);
        let th = step as f64;
        au = ar1(au, rho, &mut rng, &unit);
        av = ar1(av, rho, &mut rng, &unit);
        at = ar1(at, rho, &mut rng, &unit);
        ap = ar1(ap, rho, &mut rng, &unit);
        ah = ar1(ah, rho, &mut rng, &unit);
        let phase = 2.0 * PI * th / cfg.wind_period_h;
        let wind = (
            cfg.wind_mean.0
                + cfg.wind_amplitude * phase.cos()
                + cfg.wind_noise * au.clamp(-4.0, 4.0),
            cfg.wind_mean.1
                + cfg.wind_amplitude * phase.sin()
                + cfg.wind_noise * av.clamp(-4.0, 4.0),
        );
        let syn = Synoptic {
            wind,
            temp_anom: at,
            pressure_anom: ap,
            humidity_anom: ah,
        };
        let frame: Vec<WeatherObs> = (0..cells)
            .map(|i| cell_weather(cfg, t, &syn, i / grid.cols, i % grid.cols))
            .collect();

        let hour = t.hour() as f64;
        let winter = 1.0 + 0.5 * (2.0 * PI * (t.ordinal0() as f64 - 15.0) / 365.0).cos();
        let daylight = (PI * (hour - 6.0) / 12.0).sin().max(0.0);
        for (k, sp) in SPECIES.iter().enumerate() {
            let mut emission = vec![0.0; cells];
            for (i, w) in frame.iter().enumerate() {
                emission[i] = if sp.photochemical {
                    cfg.background
                        * sp.background_scale
                        * 6.0
                        * daylight
                        * (w.temperature.max(0.0) / 25.0 + 0.2)
                } else {
                    cfg.background * sp.background_scale * winter
                };
            }
            for s in &cfg.sources {
                let diurnal = 1.0 + s.amplitude * (2.0 * PI * (hour - s.peak_hour) / 24.0).cos();
                emission[s.row * grid.cols + s.col] += sp.source_scale * s.rate * diurnal * winter;
            }
            let field = &mut fields[k];
            let (u, v) = (wind.0 * 3.6, wind.1 * 3.6);
            let outflow = edge_outflow(&tr, u, v);
            for _ in 0..substeps {
                tr.step(field, &mut scratch, u, v, cfg.diffusion, sub_dt);
                for (i, (c, w)) in field.iter_mut().zip(&frame).enumerate() {
                    let washout = if w.condition_id == 2 { 0.12 } else { 0.0 };
                    let ventilation = 0.006 * w.wind_speed;
                    let k_total = cfg.decay + sp.extra_decay + washout + ventilation + outflow[i];
                    *c = *c * (-k_total * sub_dt).exp() + emission[i] * sub_dt;
                }
            }
        }
        if step >= cfg.spin_up_hours {
            for k in 0..3 {
                truth[k].extend_from_slice(&fields[k]);
            }
            weather.extend(frame);
        }
    }

    let noise = Normal::new(0.0, cfg.noise_std.max(f64::MIN_POSITIVE)).expect("finite std");
    let mut obs_rng =
        ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(1));
    let mut pollution = Vec::with_capacity(cfg.hours * stations.len());
    for h in 0..cfg.hours {
        for st in stations.iter() {
            let mut row = [None; 3];
            for (k, slot) in row.iter_mut().enumerate() {
                let truth_v = truth[k][h * cells + st.row * grid.cols + st.col];
                let e = if cfg.noise_std > 0.0 {
                    noise
                        .sample(&mut obs_rng)
                        .clamp(-3.0 * cfg.noise_std, 3.0 * cfg.noise_std)
                } else {
                    0.0
                };
                let missing = cfg.missing_rate > 0.0 && obs_rng.random::<f64>() < cfg.missing_rate;
                *slot = (!missing).then_some((truth_v + e).max(0.0));
            }
            pollution.push(row);
        }
    }

    let dataset = RawDataset {
        grid: grid.clone(),
        stations,
        start: cfg.start,
        hours: cfg.hours,
        pollution,
        weather,
    };
    dataset.validate()?;
    Ok(SynthOutput {
        config: cfg.clone(),
        dataset,
        truth,
    })
}

/// Removal rate at wall cells equal to what an open outflow boundary would
/// carry away. The transport operator itself stays closed; without this sink
/// a steady wind piles pollutant against the downwind wall.
fn edge_outflow(tr: &Transport, u: f64, v: f64) -> Vec<f64> {
    let mut k = vec![0.0; tr.rows * tr.cols];
    for r in 0..tr.rows {
        for c in 0..tr.cols {
            let i = r * tr.cols + c;
            if (c + 1 == tr.cols && u > 0.0) || (c == 0 && u < 0.0) {
                k[i] += u.abs() / tr.dx;
            }
            if (r + 1 == tr.rows && v > 0.0) || (r == 0 && v < 0.0) {
                k[i] += v.abs() / tr.dy;
            }
        }
    }
    k
}

fn place_stations(cfg: &SynthConfig) -> Vec<StationRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.placement_seed);
    let g = &cfg.grid;
    let (h, w) = (g.rows as f64 * g.cell_deg, g.cols as f64 * g.cell_deg);
    (0..cfg.stations)
        .map(|i| {
            // bias towards the centre, like an urban network
            let pull = |rng: &mut ChaCha8Rng| {
                let a: f64 = rng.random_range(0.02..0.98);
                let b: f64 = rng.random_range(0.02..0.98);
                if i % 3 == 0 {
                    a
                } else {
                    0.5 * (a + b)
                }
            };
            let lat = g.origin_lat + pull(&mut rng) * h;
            let lon = g.origin_lon + pull(&mut rng) * w;
            StationRecord {
                station_id: format!("S{:02}", i + 1),
                latitude: (lat * 1e5).round() / 1e5,
                longitude: (lon * 1e5).round() / 1e5,
            }
        })
        .collect()
}

/// Writes the dataset CSVs, per-pollutant truth series, and `manifest.json`
/// into `dir`. Returns the manifest.
pub fn write_output(dir: &Path, out: &SynthOutput) -> Result<DatasetManifest> {
    fs::create_dir_all(dir)?;
    let (stations, pollution, weather) = write_dataset(dir, &out.dataset)?;
    let mut truth = BTreeMap::new();
    for p in Pollutant::ALL {
        let name = format!("truth_{p}.csv");
        write_grid_series(
            &dir.join(&name),
            &out.dataset.grid,
            out.dataset.start,
            &out.truth[p.index()],
        )?;
        truth.insert(p, name.into());
    }
    let manifest = DatasetManifest {
        stations,
        pollution,
        weather,
        truth,
        grid: out.dataset.grid.clone(),
        start: out.config.start,
        end: out.config.end(),
        train_cutoff: out.config.train_cutoff,
        pollutants: Pollutant::ALL.to_vec(),
        provenance: serde_json::json!({
            "generator": "synth",
            "seed": out.config.seed,
            "config": out.config,
        }),
    };
    manifest.save(&dir.join("manifest.json"))?;
    Ok(manifest)
}
