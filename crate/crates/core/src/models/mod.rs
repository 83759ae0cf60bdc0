//! DIST-Net and the comparison forecasters.

mod config;
mod spatial;
mod temporal;

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use config::{ModelConfig, ModelKind};

use crate::error::{Error, Result};
use crate::features::{FeatureRange, NormalizationSpec, Pollutant, SampleWindow, CHANNELS, GAMMA};
use crate::grid::neighbor_aggregate;
use crate::nn::{Activation, Bound, DenseLayer, Initializer, ParamManifest, ParamSet};
use crate::tensor::{Tape, Tensor, Var};
use spatial::{spot_matrix, Spatial};
use temporal::Temporal;

const CHECKPOINT_FORMAT: &str = "distnet-model/1";
const PREDICT_BATCH: usize = 64;

#[derive(Debug, Clone)]
enum Net {
    Distnet {
        spatial: Spatial,
        temporal: Temporal,
    },
    Mlp(Mlp),
    Local(Temporal),
    Neighbor(Temporal),
    Persistence,
}

#[derive(Debug, Clone)]
struct Mlp {
    spatial: DenseLayer,
    spatial_out: DenseLayer,
    temporal: Vec<DenseLayer>,
}

/// A forecaster for one pollutant with its parameters and the frozen
/// normalization of its training data.
#[derive(Debug, Clone)]
pub struct Forecaster {
    pub config: ModelConfig,
    pub pollutant: Pollutant,
    pub normalization: NormalizationSpec,
    pub params: ParamSet,
    net: Net,
}

impl Forecaster {
    pub fn new(
        config: ModelConfig,
        pollutant: Pollutant,
        normalization: NormalizationSpec,
    ) -> Result<Self> {
        config.validate()?;
        normalization.validate()?;
        match normalization.ranges.first() {
            Some(r) if r.name == pollutant.as_str() => {}
            _ => {
                return Err(Error::config(format!(
                    "normalization does not start with the {pollutant} target range"
                )))
            }
        }
        let mut params = ParamSet::new();
        let mut init = Initializer::new(config.seed);
        let local_in = CHANNELS + GAMMA;
        let net = match config.kind {
            ModelKind::Distnet => {
                let spatial = Spatial::new(&mut params, &mut init, &config)?;
                let temporal =
                    Temporal::new(&mut params, &mut init, &config, config.beta() + GAMMA)?;
                Net::Distnet { spatial, temporal }
            }
            ModelKind::LocalSeq2seq => {
                Net::Local(Temporal::new(&mut params, &mut init, &config, local_in)?)
            }
            ModelKind::NeighborSeq2seq => Net::Neighbor(Temporal::new(
                &mut params,
                &mut init,
                &config,
                crate::grid::SECTORS * CHANNELS + local_in,
            )?),
            ModelKind::Mlp => {
                let spatial = DenseLayer::new(
                    &mut params,
                    &mut init,
                    "mlp.spatial",
                    local_in,
                    config.mlp_spatial,
                    Activation::Selu,
                )?;
                let spatial_out = DenseLayer::new(
                    &mut params,
                    &mut init,
                    "mlp.spatial_out",
                    config.mlp_spatial,
                    1,
                    Activation::Selu,
                )?;
                let mut temporal = Vec::new();
                let mut width = config.encoder_len;
                for (k, &units) in config.mlp_temporal.iter().enumerate() {
                    temporal.push(DenseLayer::new(
                        &mut params,
                        &mut init,
                        &format!("mlp.temporal{k}"),
                        width,
                        units,
                        Activation::Selu,
                    )?);
                    width = units;
                }
                temporal.push(DenseLayer::new(
                    &mut params,
                    &mut init,
                    "mlp.head",
                    width,
                    config.horizon,
                    Activation::Identity,
                )?);
                Net::Mlp(Mlp {
                    spatial,
                    spatial_out,
                    temporal,
                })
            }
            ModelKind::Persistence => Net::Persistence,
        };
        Ok(Self {
            config,
            pollutant,
            normalization,
            params,
            net,
        })
    }

    pub fn kind(&self) -> ModelKind {
        self.config.kind
    }

    pub fn target_range(&self) -> &FeatureRange {
        &self.normalization.ranges[0]
    }

    /// Whether the model has anything to fit.
    pub fn is_trainable(&self) -> bool {
        !self.params.is_empty()
    }

    fn check_batch(&self, windows: &[&SampleWindow]) -> Result<()> {
        if windows.is_empty() {
            return Err(Error::contract("forward pass over an empty batch"));
        }
        for w in windows {
            if w.encoder_len != self.config.encoder_len || w.horizon != self.config.horizon {
                return Err(Error::config(format!(
                    "input stage: window has T={}, tau={} but the model expects T={}, tau={}",
                    w.encoder_len, w.horizon, self.config.encoder_len, self.config.horizon
                )));
            }
            if w.pollutant() != self.pollutant {
                return Err(Error::config(format!(
                    "input stage: {} window fed to a {} model",
                    w.pollutant(),
                    self.pollutant
                )));
            }
            if w.data.normalization != self.normalization {
                return Err(Error::Version(
                    "data normalization differs from the model's".into(),
                ));
            }
        }
        Ok(())
    }

    /// Original-scale forecasts `[B, τ]`, not floored, for every window.
    pub fn forward(&self, tape: &mut Tape, p: &Bound, windows: &[&SampleWindow]) -> Result<Var> {
        self.check_batch(windows)?;
        self.forward_with(tape, p, windows, false)
    }

    /// Like [`Forecaster::forward`], with DIST-Net convolving full frames
    /// instead of cropped neighbourhoods.
    pub fn forward_reference(
        &self,
        tape: &mut Tape,
        p: &Bound,
        windows: &[&SampleWindow],
    ) -> Result<Var> {
        self.check_batch(windows)?;
        self.forward_with(tape, p, windows, true)
    }

    fn forward_with(
        &self,
        tape: &mut Tape,
        p: &Bound,
        windows: &[&SampleWindow],
        full: bool,
    ) -> Result<Var> {
        let b = windows.len();
        let steps = self.config.encoder_len;
        let (hours, weekdays) = future_ids(windows);
        let pre = match &self.net {
            Net::Distnet { spatial, temporal } => {
                let f = if full {
                    spatial.forward_full(tape, p, windows, steps)?
                } else {
                    spatial.forward(tape, p, windows, steps)?
                };
                let s = tape.constant(stats_matrix(windows, steps));
                let g = tape.concat(&[f, s], 1)?;
                temporal.forward(tape, p, g, b, &hours, &weekdays)?
            }
            Net::Local(temporal) => {
                let g = tape.constant(local_inputs(windows, steps)?);
                temporal.forward(tape, p, g, b, &hours, &weekdays)?
            }
            Net::Neighbor(temporal) => {
                let g = tape.constant(neighbor_inputs(
                    windows,
                    steps,
                    self.config.neighbor_radius_km,
                )?);
                temporal.forward(tape, p, g, b, &hours, &weekdays)?
            }
            Net::Mlp(m) => {
                let x = tape.constant(local_inputs(windows, steps)?);
                let h = m.spatial.forward(tape, p, x)?;
                let h = m.spatial_out.forward(tape, p, h)?;
                let h = tape.reshape(h, &[steps, b])?;
                let mut h = tape.transpose(h)?;
                for layer in &m.temporal {
                    h = layer.forward(tape, p, h)?;
                }
                return self.denormalize(tape, h);
            }
            Net::Persistence => {
                let tau = self.config.horizon;
                let data = windows
                    .iter()
                    .flat_map(|w| std::iter::repeat_n(w.last_observed(), tau))
                    .collect();
                return Ok(tape.constant(Tensor::new(vec![b, tau], data)?));
            }
        };
        let pre = tape.reshape(pre, &[self.config.horizon, b])?;
        let pre = tape.transpose(pre)?;
        self.denormalize(tape, pre)
    }

    fn denormalize(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let r = self.target_range();
        let y = tape.scale(x, r.span())?;
        tape.add_scalar(y, r.min)
    }

    /// Reported forecasts, floored at zero, one row per window.
    pub fn predict(&self, windows: &[SampleWindow]) -> Result<Vec<Vec<f64>>> {
        let mut out = Vec::with_capacity(windows.len());
        for chunk in windows.chunks(PREDICT_BATCH) {
            let refs: Vec<&SampleWindow> = chunk.iter().collect();
            let mut tape = Tape::new();
            let p = self.params.bind(&mut tape, false);
            let y = self.forward(&mut tape, &p, &refs)?;
            let tau = self.config.horizon;
            for row in tape.value(y).chunks(tau) {
                out.push(row.iter().map(|v| v.max(0.0)).collect());
            }
        }
        Ok(out)
    }

    pub fn to_checkpoint(&self) -> ModelCheckpoint {
        ModelCheckpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            pollutant: self.pollutant,
            config: self.config.clone(),
            normalization: self.normalization.clone(),
            params: self.params.to_manifest(),
        }
    }

    pub fn from_checkpoint(ck: &ModelCheckpoint) -> Result<Self> {
        if ck.format != CHECKPOINT_FORMAT {
            return Err(Error::Version(format!(
                "unsupported model checkpoint format {}",
                ck.format
            )));
        }
        let mut model = Self::new(ck.config.clone(), ck.pollutant, ck.normalization.clone())?;
        model.params.load_manifest(&ck.params)?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string(&self.to_checkpoint())?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let ck: ModelCheckpoint = serde_json::from_str(&fs::read_to_string(path)?)?;
        Self::from_checkpoint(&ck)
    }
}

/// Parameters, configuration and normalization in one file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelCheckpoint {
    pub format: String,
    pub pollutant: Pollutant,
    pub config: ModelConfig,
    pub normalization: NormalizationSpec,
    pub params: ParamManifest,
}

fn future_ids(windows: &[&SampleWindow]) -> (Vec<usize>, Vec<usize>) {
    let per: Vec<_> = windows.iter().map(|w| w.future_time_ids()).collect();
    let tau = per[0].len();
    let mut hours = Vec::with_capacity(tau * windows.len());
    let mut weekdays = Vec::with_capacity(tau * windows.len());
    for s in 0..tau {
        for ids in &per {
            hours.push(ids[s].hour);
            weekdays.push(ids[s].weekday);
        }
    }
    (hours, weekdays)
}

fn stats_matrix(windows: &[&SampleWindow], steps: usize) -> Tensor {
    let mut data = Vec::with_capacity(steps * windows.len() * GAMMA);
    for t in 0..steps {
        for w in windows {
            data.extend_from_slice(w.stats(t));
        }
    }
    Tensor::new(vec![steps * windows.len(), GAMMA], data).expect("stats matrix shape")
}

fn local_inputs(windows: &[&SampleWindow], steps: usize) -> Result<Tensor> {
    let spot = spot_matrix(windows, steps);
    let stats = stats_matrix(windows, steps);
    let rows = steps * windows.len();
    let mut data = Vec::with_capacity(rows * (CHANNELS + GAMMA));
    for i in 0..rows {
        data.extend_from_slice(&spot.data()[i * CHANNELS..(i + 1) * CHANNELS]);
        data.extend_from_slice(&stats.data()[i * GAMMA..(i + 1) * GAMMA]);
    }
    Tensor::new(vec![rows, CHANNELS + GAMMA], data)
}

fn neighbor_inputs(windows: &[&SampleWindow], steps: usize, radius_km: f64) -> Result<Tensor> {
    let data0 = &windows[0].data;
    let positions = data0.stations.positions(&data0.grid);
    let width = crate::grid::SECTORS * CHANNELS + CHANNELS + GAMMA;
    let mut data = Vec::with_capacity(steps * windows.len() * width);
    for t in 0..steps {
        for w in windows {
            let hour = w.start + t;
            let others: Vec<((f64, f64), &[f64])> = w
                .data
                .stations
                .iter()
                .enumerate()
                .filter(|&(s, _)| s != w.station)
                .map(|(s, st)| (positions[s], w.data.cell_features(hour, st.row, st.col)))
                .collect();
            data.extend(neighbor_aggregate(
                positions[w.station],
                w.spot(t),
                &others,
                radius_km,
            ));
            data.extend_from_slice(w.spot(t));
            data.extend_from_slice(w.stats(t));
        }
    }
    Tensor::new(vec![steps * windows.len(), width], data)
}
