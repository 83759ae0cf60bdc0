use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::NaiveDateTime;
use distnet::eval::{
    band_aggregate, emit_report, encoder_length_sweep, forecast_windows, write_sweep_csv,
    EvalResult, SEGMENT_HOURS,
};
use distnet::features::{
    build_windows, format_timestamp, parse_timestamp, DatasetManifest, FeatureOptions, FeatureSet,
    Pollutant, RawDataset, SampleWindow, SplitPlan, WindowConfig, WindowSplit,
};
use distnet::grid::fill_series;
use distnet::models::Forecaster;
use distnet::synth::{generate, preset, write_output};
use distnet::training::train;
use distnet::{Error, Result};
use serde_json::{json, Value};

use crate::config::RunConfig;

fn write_json(path: &Path, v: &Value) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(v)? + "\n")?;
    Ok(())
}

/// Sibling of `file` carrying the run description, e.g. `out.csv.json`.
fn sidecar(file: &Path) -> PathBuf {
    let mut name = file.file_name().unwrap_or_default().to_os_string();
    name.push(".json");
    file.with_file_name(name)
}

fn load_dataset(manifest: &Path) -> Result<(DatasetManifest, RawDataset)> {
    let m = DatasetManifest::load(manifest)?;
    let base = manifest.parent().unwrap_or(Path::new(""));
    let ds = m.load_dataset(base)?;
    Ok((m, ds))
}

/// Accepts an hour index or a timestamp.
fn hour_arg(ds: &RawDataset, s: &str) -> Result<usize> {
    let h = match s.parse::<usize>() {
        Ok(h) => h,
        Err(_) => {
            let t = parse_timestamp(s).map_err(|_| Error::Config(format!("bad hour {s:?}")))?;
            ds.hour_of(t)
                .ok_or_else(|| Error::Config(format!("{s} is outside the data range")))?
        }
    };
    if h >= ds.hours {
        return Err(Error::Config(format!(
            "hour {h} is outside the {} hours of data",
            ds.hours
        )));
    }
    Ok(h)
}

pub struct SynthArgs {
    pub preset: String,
    pub seed: u64,
    pub hours: Option<usize>,
    pub stations: Option<usize>,
    pub out: PathBuf,
}

pub fn synth(a: &SynthArgs) -> Result<DatasetManifest> {
    let mut cfg = preset(&a.preset)?;
    cfg.seed = a.seed;
    if let Some(h) = a.hours {
        cfg.hours = h;
        let last = cfg.start + chrono::Duration::hours(h as i64 - 1);
        if cfg.train_cutoff >= last {
            // keep roughly the preset's final fifth for testing
            cfg.train_cutoff = cfg.start + chrono::Duration::hours((h * 4 / 5) as i64);
        }
    }
    if let Some(s) = a.stations {
        cfg.stations = s;
    }
    let out = generate(&cfg)?;
    let manifest = write_output(&a.out, &out)?;
    println!(
        "wrote {} ({} stations, {} hours, seed {}) to {}",
        cfg.name,
        out.dataset.stations.len(),
        out.dataset.hours,
        cfg.seed,
        a.out.display()
    );
    Ok(manifest)
}

pub struct InterpolateArgs {
    pub manifest: PathBuf,
    pub pollutant: Pollutant,
    pub hour: String,
    pub hours: usize,
    pub out: PathBuf,
}

/// Grids the raw readings of `hours` hours and writes `timestamp,row,col,value`.
pub fn interpolate(a: &InterpolateArgs) -> Result<usize> {
    let (_, ds) = load_dataset(&a.manifest)?;
    let first = hour_arg(&ds, &a.hour)?;
    if a.hours == 0 || first + a.hours > ds.hours {
        return Err(Error::Config(format!(
            "{} hours from hour {first} run past the {} hours of data",
            a.hours, ds.hours
        )));
    }
    let readings: Vec<_> = (first..first + a.hours)
        .map(|h| ds.readings_at(h, a.pollutant))
        .collect();
    let field = fill_series(&readings, &ds.stations, &ds.grid)?;
    if let Some(dir) = a.out.parent() {
        fs::create_dir_all(dir)?;
    }
    distnet::features::write_grid_series(&a.out, &ds.grid, ds.timestamp(first), field.data())?;
    write_json(
        &sidecar(&a.out),
        &json!({
            "command": "interpolate",
            "manifest": a.manifest,
            "pollutant": a.pollutant,
            "first_hour": format_timestamp(ds.timestamp(first)),
            "hours": a.hours,
            "grid": ds.grid,
        }),
    )?;
    let rows = a.hours * ds.grid.cells();
    println!("wrote {rows} cells to {}", a.out.display());
    Ok(rows)
}

struct Prepared {
    manifest: DatasetManifest,
    data: Arc<FeatureSet>,
}

fn prepare(run: &RunConfig) -> Result<Prepared> {
    let path = run
        .manifest
        .as_deref()
        .expect("resolved config has a manifest");
    let (manifest, ds) = load_dataset(path)?;
    let cutoff = ds.cutoff_hour(manifest.train_cutoff)?;
    let data = Arc::new(FeatureSet::build(
        &ds,
        run.pollutant,
        cutoff,
        FeatureOptions::default(),
    )?);
    Ok(Prepared { manifest, data })
}

fn split(
    data: &Arc<FeatureSet>,
    cfg: WindowConfig,
    validation_fraction: f64,
) -> Result<WindowSplit> {
    build_windows(
        data,
        cfg,
        SplitPlan::new(data.train_cutoff, validation_fraction)?,
    )
}

pub fn train_cmd(run: &RunConfig, out: &Path) -> Result<PathBuf> {
    let prep = prepare(run)?;
    let mut wc = run.model.window_config();
    wc.stride = run.train_stride;
    let windows = split(&prep.data, wc, run.validation_fraction)?;
    if windows.train.is_empty() || windows.validation.is_empty() {
        return Err(Error::Ingestion(format!(
            "too little data before the cutoff: {} train and {} validation windows",
            windows.train.len(),
            windows.validation.len()
        )));
    }
    let mut model = Forecaster::new(
        run.model.clone(),
        run.pollutant,
        prep.data.normalization.clone(),
    )?;
    let mut report = train(&mut model, &windows.train, &windows.validation, &run.train)?;
    fs::create_dir_all(out)?;
    let ck = out.join("model.json");
    model.save(&ck)?;
    report.best_checkpoint = Some(PathBuf::from("model.json"));
    report.write_json(&out.join("train_report.json"))?;
    report.write_csv(&out.join("train_log.csv"))?;
    write_json(
        &out.join("run.json"),
        &json!({
            "command": "train",
            "config": run,
            "seed": run.seed,
            "windows": {
                "train": windows.counts.train,
                "validation": windows.counts.validation,
                "dropped_gaps": windows.counts.dropped_gaps,
                "dropped_straddle": windows.counts.dropped_straddle,
            },
            "dataset": prep.manifest.provenance,
        }),
    )?;
    println!(
        "{} on {}: {} steps, best validation smape {}, stop: {}",
        model.kind(),
        run.pollutant,
        report.steps,
        report
            .best_val_smape
            .map_or("n/a".to_string(), |s| format!("{s:.4}")),
        report.stop_reason
    );
    Ok(ck)
}

fn frozen_features(
    model: &Forecaster,
    manifest: &Path,
) -> Result<(DatasetManifest, Arc<FeatureSet>)> {
    let (m, ds) = load_dataset(manifest)?;
    let cutoff = ds.cutoff_hour(m.train_cutoff)?;
    let data = FeatureSet::build_frozen(
        &ds,
        model.pollutant,
        cutoff,
        FeatureOptions::default(),
        &model.normalization,
    )?;
    Ok((m, Arc::new(data)))
}

pub struct PredictArgs {
    pub checkpoint: PathBuf,
    pub manifest: PathBuf,
    /// First forecast hour; defaults to the hour after the training cutoff.
    pub at: Option<String>,
    pub out: PathBuf,
}

/// Forecasts every station from one origin and writes
/// `station_id,pollutant,timestamp,step,prediction`.
pub fn predict(a: &PredictArgs) -> Result<usize> {
    let model = Forecaster::load(&a.checkpoint)?;
    let (_, data) = frozen_features(&model, &a.manifest)?;
    let t = model.config.encoder_len;
    let origin = match &a.at {
        Some(s) => {
            let h = match s.parse::<usize>() {
                Ok(h) => h,
                Err(_) => {
                    let ts: NaiveDateTime = parse_timestamp(s)?;
                    let d = (ts - data.start).num_hours();
                    usize::try_from(d)
                        .map_err(|_| Error::Config(format!("{s} precedes the data")))?
                }
            };
            if h > data.hours {
                return Err(Error::Config(format!(
                    "origin hour {h} is past the {} hours of data",
                    data.hours
                )));
            }
            h
        }
        None => (data.train_cutoff + 1).min(data.hours),
    };
    if origin < t {
        return Err(Error::Config(format!(
            "origin hour {origin} leaves no room for {t} encoder hours"
        )));
    }
    let windows: Vec<SampleWindow> = (0..data.stations.len())
        .map(|station| SampleWindow {
            data: Arc::clone(&data),
            station,
            start: origin - t,
            encoder_len: t,
            horizon: model.config.horizon,
        })
        .collect();
    let preds = model.predict(&windows)?;
    if let Some(dir) = a.out.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut f = fs::File::create(&a.out)?;
    writeln!(f, "station_id,pollutant,timestamp,step,prediction")?;
    let mut rows = 0;
    for (w, p) in windows.iter().zip(&preds) {
        for (k, v) in p.iter().enumerate() {
            writeln!(
                f,
                "{},{},{},{},{}",
                w.station_id(),
                model.pollutant,
                format_timestamp(data.timestamp(origin + k)),
                k + 1,
                v
            )?;
            rows += 1;
        }
    }
    write_json(
        &sidecar(&a.out),
        &json!({
            "command": "predict",
            "checkpoint": a.checkpoint,
            "manifest": a.manifest,
            "origin": format_timestamp(data.timestamp(origin)),
            "model": model.config,
            "seed": model.config.seed,
        }),
    )?;
    println!("wrote {rows} forecasts to {}", a.out.display());
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

pub struct EvaluateArgs {
    pub checkpoint: PathBuf,
    pub manifest: PathBuf,
    pub out: PathBuf,
    pub split: Split,
    pub epsilon: f64,
    pub validation_fraction: f64,
}

/// Sliding one-hour windows over a split, scored and written as a report.
pub fn evaluate(a: &EvaluateArgs) -> Result<EvalResult> {
    let model = Forecaster::load(&a.checkpoint)?;
    let (manifest, data) = frozen_features(&model, &a.manifest)?;
    let windows = split(&data, model.config.window_config(), a.validation_fraction)?;
    let chosen = match a.split {
        Split::Train => &windows.train,
        Split::Validation => &windows.validation,
        Split::Test => &windows.test,
    };
    if chosen.is_empty() {
        return Err(Error::Ingestion(format!(
            "no complete {:?} windows to evaluate",
            a.split
        )));
    }
    let forecasts = forecast_windows(&model, chosen)?;
    let result = EvalResult::compute(&forecasts, SEGMENT_HOURS, a.epsilon)?;
    let bands = band_aggregate(&forecasts);
    let run = json!({
        "command": "evaluate",
        "checkpoint": a.checkpoint,
        "manifest": a.manifest,
        "split": a.split,
        "windows": chosen.len(),
        "model": model.config,
        "seed": model.config.seed,
        "dataset": manifest.provenance,
    });
    emit_report(&result, &bands, &a.out, &run)?;
    for s in &result.overall {
        println!(
            "{} {} over {} stations: smape {:.4} rmse {:.3}",
            model.kind(),
            s.pollutant,
            s.stations,
            s.smape,
            s.rmse
        );
    }
    Ok(result)
}

pub fn sweep(run: &RunConfig, lengths: &[usize], out: &Path) -> Result<PathBuf> {
    let prep = prepare(run)?;
    let rows = encoder_length_sweep(
        &prep.data,
        lengths,
        &run.model,
        &run.train,
        run.validation_fraction,
    )?;
    fs::create_dir_all(out)?;
    let path = out.join("sweep.csv");
    write_sweep_csv(&rows, &path)?;
    write_json(
        &sidecar(&path),
        &json!({
            "command": "sweep",
            "config": run,
            "seed": run.seed,
            "lengths": lengths,
        }),
    )?;
    for r in &rows {
        println!(
            "encoder {:>3}: smape {:.4} rmse {:.3}",
            r.encoder_len, r.smape, r.rmse
        );
    }
    Ok(path)
}
