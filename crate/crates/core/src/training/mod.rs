//! SMAPE loss and the mini-batch training loop.

use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{rmse_metric, smape_metric, DEFAULT_EPSILON};
use crate::features::SampleWindow;
use crate::models::Forecaster;
use crate::nn::{Adam, AdamConfig};
use crate::tensor::{Tape, Var};

/// Batch-mean SMAPE of `pred` against constant `truth`, both `[B, τ]`.
pub fn smape_loss(tape: &mut Tape, pred: Var, truth: Var, eps: f64) -> Result<Var> {
    if tape.shape(pred) != tape.shape(truth) {
        return Err(Error::contract(format!(
            "smape over {:?} predictions and {:?} truths",
            tape.shape(pred),
            tape.shape(truth)
        )));
    }
    if !(eps > 0.0) {
        return Err(Error::config("smape epsilon must be positive"));
    }
    let diff = tape.sub(pred, truth)?;
    let num = tape.abs(diff)?;
    let ap = tape.abs(pred)?;
    let at = tape.abs(truth)?;
    let den = tape.add(ap, at)?;
    let den = tape.max_scalar(den, eps)?;
    let terms = tape.div(num, den)?;
    let m = tape.mean(terms)?;
    tape.scale(m, 2.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation improvement tolerated before stopping.
    pub patience: usize,
    /// Optional cap on optimizer steps across all epochs.
    pub max_steps: Option<usize>,
    pub seed: u64,
    /// SMAPE denominator floor, µg/m³.
    pub epsilon: f64,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            max_epochs: 50,
            patience: 5,
            max_steps: None,
            seed: 0,
            epsilon: DEFAULT_EPSILON,
            adam: AdamConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::config("batch size must be at least 1"));
        }
        if self.max_epochs == 0 {
            return Err(Error::config("max epochs must be at least 1"));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::config("smape epsilon must be positive"));
        }
        if !(self.adam.lr > 0.0) {
            return Err(Error::config("learning rate must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_smape: f64,
    pub val_rmse: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    /// Loss of every optimizer step, in order.
    pub step_losses: Vec<f64>,
    pub steps: usize,
    pub best_epoch: Option<usize>,
    pub best_val_smape: Option<f64>,
    pub best_checkpoint: Option<PathBuf>,
    pub stop_reason: String,
}

impl TrainReport {
    /// `epoch,train_loss,val_smape,val_rmse,seconds`
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path)?;
        writeln!(f, "epoch,train_loss,val_smape,val_rmse,seconds")?;
        for e in &self.epochs {
            writeln!(
                f,
                "{},{},{},{},{:.3}",
                e.epoch, e.train_loss, e.val_smape, e.val_rmse, e.seconds
            )?;
        }
        Ok(())
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

fn describe(batch: &[&SampleWindow]) -> String {
    batch
        .iter()
        .map(|w| format!("{}@{}", w.station_id(), w.start))
        .collect::<Vec<_>>()
        .join(", ")
}

/// Loss of `model` on one batch; leaves gradients on the tape when asked.
pub fn batch_loss(
    model: &Forecaster,
    batch: &[&SampleWindow],
    eps: f64,
    backward: bool,
) -> Result<(f64, Vec<Vec<f64>>)> {
    let mut tape = Tape::new();
    let p = model.params.bind(&mut tape, backward);
    let pred = model.forward(&mut tape, &p, batch)?;
    let truth: Vec<f64> = batch.iter().flat_map(|w| w.target()).collect();
    let truth = tape.constant(crate::tensor::Tensor::new(
        tape.shape(pred).to_vec(),
        truth,
    )?);
    let loss = smape_loss(&mut tape, pred, truth, eps)?;
    let value = tape.item(loss)?;
    if !backward {
        return Ok((value, Vec::new()));
    }
    tape.backward(loss)?;
    Ok((value, p.grads(&tape)))
}

/// Validation SMAPE and RMSE of floored forecasts.
pub fn evaluate_windows(
    model: &Forecaster,
    windows: &[SampleWindow],
    eps: f64,
) -> Result<(f64, f64)> {
    let preds: Vec<f64> = model.predict(windows)?.into_iter().flatten().collect();
    let truths: Vec<f64> = windows.iter().flat_map(|w| w.target()).collect();
    Ok((
        smape_metric(&preds, &truths, eps)?,
        rmse_metric(&preds, &truths)?,
    ))
}

/// Trains `model` in place and leaves it holding the best-validation
/// parameters.
pub fn train(
    model: &mut Forecaster,
    train: &[SampleWindow],
    val: &[SampleWindow],
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    cfg.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::contract(
            "training needs non-empty train and validation splits",
        ));
    }
    let key = |w: &SampleWindow| (w.station, w.start);
    let seen: HashSet<_> = train.iter().map(key).collect();
    if val.iter().any(|w| seen.contains(&key(w))) {
        return Err(Error::contract("train and validation windows overlap"));
    }
    let mut report = TrainReport {
        epochs: Vec::new(),
        step_losses: Vec::new(),
        steps: 0,
        best_epoch: None,
        best_val_smape: None,
        best_checkpoint: None,
        stop_reason: String::new(),
    };
    if !model.is_trainable() {
        let (s, r) = evaluate_windows(model, val, cfg.epsilon)?;
        report.best_val_smape = Some(s);
        report.stop_reason = format!("{} has no parameters; validation rmse {r}", model.kind());
        return Ok(report);
    }

    let mut adam = Adam::new(cfg.adam, &model.params);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut best = model.params.clone();
    let mut best_smape = f64::INFINITY;
    let mut since_best = 0;
    let max_steps = cfg.max_steps.unwrap_or(usize::MAX);
    report.stop_reason = "max epochs".into();

    'epochs: for epoch in 1..=cfg.max_epochs {
        let t0 = Instant::now();
        order.shuffle(&mut rng);
        let (mut sum, mut n) = (0.0, 0usize);
        for idx in order.chunks(cfg.batch_size) {
            let batch: Vec<&SampleWindow> = idx.iter().map(|&i| &train[i]).collect();
            let (loss, grads) =
                batch_loss(model, &batch, cfg.epsilon, true).map_err(|e| match e {
                    Error::NonFinite { op } => {
                        Error::Training(format!("non-finite {op} in batch [{}]", describe(&batch)))
                    }
                    e => e,
                })?;
            if !loss.is_finite() {
                return Err(Error::Training(format!(
                    "non-finite loss in batch [{}]",
                    describe(&batch)
                )));
            }
            adam.step(&mut model.params, &grads)
                .map_err(|e| Error::Training(format!("{e} in batch [{}]", describe(&batch))))?;
            report.step_losses.push(loss);
            report.steps += 1;
            sum += loss * batch.len() as f64;
            n += batch.len();
            if report.steps >= max_steps {
                report.stop_reason = "max steps".into();
                let done = record_epoch(model, val, cfg, epoch, sum / n as f64, t0, &mut report)?;
                if done < best_smape {
                    best_smape = done;
                    best = model.params.clone();
                    report.best_epoch = Some(epoch);
                }
                break 'epochs;
            }
        }
        let vs = record_epoch(model, val, cfg, epoch, sum / n as f64, t0, &mut report)?;
        if vs < best_smape {
            best_smape = vs;
            best = model.params.clone();
            report.best_epoch = Some(epoch);
            since_best = 0;
        } else {
            since_best += 1;
            if since_best > cfg.patience {
                report.stop_reason = "early stop".into();
                break;
            }
        }
    }
    model.params = best;
    report.best_val_smape = Some(best_smape);
    Ok(report)
}

fn record_epoch(
    model: &Forecaster,
    val: &[SampleWindow],
    cfg: &TrainConfig,
    epoch: usize,
    train_loss: f64,
    t0: Instant,
    report: &mut TrainReport,
) -> Result<f64> {
    let (val_smape, val_rmse) = evaluate_windows(model, val, cfg.epsilon)?;
    log::info!("epoch {epoch}: train {train_loss:.4} val smape {val_smape:.4} rmse {val_rmse:.3}");
    report.epochs.push(EpochRecord {
        epoch,
        train_loss,
        val_smape,
        val_rmse,
        seconds: t0.elapsed().as_secs_f64(),
    });
    Ok(val_smape)
}
