use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::results::{forecast_windows, station_metrics};
use crate::error::{Error, Result};
use crate::features::{build_windows, FeatureSet, SplitPlan};
use crate::models::{Forecaster, ModelConfig};
use crate::training::{train, TrainConfig};

/// Test-split scores of one encoder length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub encoder_len: usize,
    pub smape: f64,
    pub rmse: f64,
    pub test_windows: usize,
    pub steps: usize,
}

/// Trains and tests one model per encoder length, all from the same seeds.
pub fn encoder_length_sweep(
    data: &Arc<FeatureSet>,
    lengths: &[usize],
    model: &ModelConfig,
    cfg: &TrainConfig,
    validation_fraction: f64,
) -> Result<Vec<SweepRow>> {
    if lengths.is_empty() {
        return Err(Error::config("sweep needs at least one encoder length"));
    }
    let longest = lengths.iter().max().copied().unwrap_or(0) + model.horizon;
    if data.hours < longest {
        return Err(Error::ingestion(format!(
            "{} hours of data cannot hold encoder {} + horizon {}",
            data.hours,
            longest - model.horizon,
            model.horizon
        )));
    }
    let plan = SplitPlan::new(data.train_cutoff, validation_fraction)?;
    let mut rows = Vec::with_capacity(lengths.len());
    for &t in lengths {
        let mut mc = model.clone();
        mc.encoder_len = t;
        let split = build_windows(data, mc.window_config(), plan)?;
        if split.test.is_empty() {
            return Err(Error::ingestion(format!(
                "encoder length {t} leaves no test windows"
            )));
        }
        let mut m = Forecaster::new(mc, data.pollutant, data.normalization.clone())?;
        let report = train(&mut m, &split.train, &split.validation, cfg)?;
        let (_, overall) = station_metrics(&forecast_windows(&m, &split.test)?, cfg.epsilon)?;
        let s = &overall[0];
        rows.push(SweepRow {
            encoder_len: t,
            smape: s.smape,
            rmse: s.rmse,
            test_windows: split.test.len(),
            steps: report.steps,
        });
    }
    Ok(rows)
}

/// `encoder_len,smape,rmse,test_windows,steps`
pub fn write_sweep_csv(rows: &[SweepRow], path: &Path) -> Result<()> {
    let mut f = fs::File::create(path)?;
    writeln!(f, "encoder_len,smape,rmse,test_windows,steps")?;
    for r in rows {
        writeln!(
            f,
            "{},{},{},{},{}",
            r.encoder_len, r.smape, r.rmse, r.test_windows, r.steps
        )?;
    }
    Ok(())
}
