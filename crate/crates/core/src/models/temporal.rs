use crate::error::Result;
use crate::features::{DAYS_PER_WEEK, HOURS_PER_DAY};
use crate::nn::{Activation, Bound, DenseLayer, Embedding, GruCell, Initializer, ParamSet};
use crate::tensor::{Tape, Var};

use super::ModelConfig;

/// GRU encoder, attention over the time axis, time embeddings, GRU decoder
/// and a per-step scalar head.
#[derive(Debug, Clone)]
pub(crate) struct Temporal {
    encoder: GruCell,
    attention: DenseLayer,
    hour: Embedding,
    weekday: Embedding,
    decoder: GruCell,
    head: DenseLayer,
    horizon: usize,
}

impl Temporal {
    pub fn new(
        params: &mut ParamSet,
        init: &mut Initializer,
        cfg: &ModelConfig,
        input: usize,
    ) -> Result<Self> {
        let d = cfg.hidden;
        Ok(Self {
            encoder: GruCell::new(params, init, "encoder", input, d)?,
            attention: DenseLayer::new(
                params,
                init,
                "attention",
                cfg.encoder_len,
                cfg.horizon,
                Activation::Selu,
            )?,
            hour: Embedding::new(
                params,
                init,
                "hour_embedding",
                HOURS_PER_DAY,
                cfg.hour_embedding,
            )?,
            weekday: Embedding::new(
                params,
                init,
                "weekday_embedding",
                DAYS_PER_WEEK,
                cfg.weekday_embedding,
            )?,
            decoder: GruCell::new(params, init, "decoder", d + cfg.eta(), d)?,
            head: DenseLayer::new(params, init, "head", d, 1, Activation::Selu)?,
            horizon: cfg.horizon,
        })
    }

    /// `g` is step-major `[T * batch, input]`; `hours` and `weekdays` are
    /// step-major over the horizon. Returns the normalized forecast as
    /// `[horizon * batch, 1]`, step-major.
    pub fn forward(
        &self,
        tape: &mut Tape,
        p: &Bound,
        g: Var,
        batch: usize,
        hours: &[usize],
        weekdays: &[usize],
    ) -> Result<Var> {
        let d = self.encoder.hidden;
        let states = self.encoder.unroll(tape, p, g, batch, None)?;
        let last = *states.last().expect("encoder ran at least one step");
        let mut rows = Vec::with_capacity(states.len());
        for s in states {
            rows.push(tape.reshape(s, &[1, batch * d])?);
        }
        // [T, B*d] -> time on the inner axis so the dense layer maps T to τ
        let e = tape.concat(&rows, 0)?;
        let et = tape.transpose(e)?;
        let r = self.attention.forward(tape, p, et)?;
        let r = tape.transpose(r)?;
        let r = tape.reshape(r, &[self.horizon * batch, d])?;
        let he = self.hour.lookup(tape, p, hours)?;
        let we = self.weekday.lookup(tape, p, weekdays)?;
        let h = tape.concat(&[r, he, we], 1)?;
        let dec = self.decoder.unroll(tape, p, h, batch, Some(last))?;
        let dec = tape.concat(&dec, 0)?;
        self.head.forward(tape, p, dec)
    }
}
