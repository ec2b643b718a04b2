use alloc::vec::Vec;

use super::{ArConfig, BlockConfig, MrConfig, ParamStore, AR_STAGES, NORM_EPS};
use crate::autodiff::{Tape, Var};
use crate::error::{dim_err, Result};
use crate::rng;

/// Dropout is active only in training mode; each block derives its mask
/// seed from `seed`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Eval,
    Train { seed: u64 },
}

/// A parameter store placed on a tape, in layout order.
#[derive(Debug, Clone)]
pub struct BoundParams {
    vars: Vec<Var>,
}

impl BoundParams {
    /// Leaves for every tensor; `trainable = false` makes them constants.
    pub fn bind(tape: &mut Tape, store: &ParamStore, trainable: bool) -> Self {
        let vars = store.tensors().map(|t| tape.leaf(t.clone(), trainable)).collect();
        Self { vars }
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    fn cursor(&self) -> Cursor<'_> {
        Cursor { vars: &self.vars, at: 0 }
    }
}

struct Cursor<'a> {
    vars: &'a [Var],
    at: usize,
}

impl Cursor<'_> {
    fn next(&mut self) -> Result<Var> {
        let v = self.vars.get(self.at).copied().ok_or_else(|| dim_err!("parameter list too short"))?;
        self.at += 1;
        Ok(v)
    }

    fn finish(&self) -> Result<()> {
        if self.at != self.vars.len() {
            return Err(dim_err!("{} parameters bound, {} used", self.vars.len(), self.at));
        }
        Ok(())
    }
}

#[derive(Clone, Copy)]
enum Stage {
    Hidden { index: u64 },
    Output,
}

#[allow(clippy::too_many_arguments)]
fn block(
    tape: &mut Tape,
    p: &mut Cursor<'_>,
    x: Var,
    cfg: &BlockConfig,
    up: bool,
    stage: Stage,
    mode: Mode,
) -> Result<Var> {
    let pad = cfg.kernel_size / 2;
    let (w, b) = (p.next()?, p.next()?);
    let mut main = if up {
        tape.selfonn_tconv1d(x, w, b, cfg.stride, pad, cfg.stride - 1)?
    } else {
        tape.selfonn_conv1d(x, w, b, cfg.stride, pad)?
    };
    if let Stage::Hidden { index } = stage {
        let (gamma, beta) = (p.next()?, p.next()?);
        main = tape.instance_norm(main, gamma, beta, NORM_EPS)?;
        main = tape.tanh(main);
        main = match mode {
            Mode::Train { seed } => tape.dropout(main, cfg.dropout_rate, true, rng::derive(seed, &[index]))?,
            Mode::Eval => main,
        };
    }
    let (sw, sb) = (p.next()?, p.next()?);
    let skip = if up {
        tape.selfonn_tconv1d(x, sw, sb, cfg.stride, 0, cfg.stride - 1)?
    } else {
        tape.selfonn_conv1d(x, sw, sb, cfg.stride, 0)?
    };
    let sum = tape.add(main, skip)?;
    Ok(match stage {
        Stage::Hidden { .. } => sum,
        Stage::Output => tape.tanh(sum),
    })
}

fn check_input(tape: &Tape, x: Var, channels: usize, len: usize) -> Result<()> {
    let (_, c, l) = tape.value(x).dims3()?;
    if c != channels || l != len {
        return Err(dim_err!("expected input [B, {channels}, {len}], got {:?}", tape.value(x).shape()));
    }
    Ok(())
}

/// Restores `r` (`[B, 2, L]`); output has the same shape, bounded by tanh.
pub fn ar_forward(tape: &mut Tape, cfg: &ArConfig, params: &BoundParams, r: Var, mode: Mode) -> Result<Var> {
    check_input(tape, r, cfg.input_channels, cfg.segment_len)?;
    let blocks = cfg.blocks();
    let mut p = params.cursor();
    let mut skips = Vec::with_capacity(AR_STAGES);
    let mut h = r;
    for (j, b) in blocks[..AR_STAGES].iter().enumerate() {
        h = block(tape, &mut p, h, b, false, Stage::Hidden { index: j as u64 }, mode)?;
        debug_assert_eq!(tape.value(h).shape()[2], cfg.segment_len >> (j + 1));
        skips.push(h);
    }
    skips.pop();
    for (j, b) in blocks[AR_STAGES..2 * AR_STAGES - 1].iter().enumerate() {
        h = block(tape, &mut p, h, b, true, Stage::Hidden { index: (AR_STAGES + j) as u64 }, mode)?;
        let e = skips.pop().expect("one skip per decoder block");
        h = tape.concat_channels(h, e)?;
    }
    h = block(tape, &mut p, h, &blocks[2 * AR_STAGES - 1], true, Stage::Output, mode)?;
    p.finish()?;
    Ok(h)
}

/// Predicted normalized PSNR of `candidate` given `r`, shape `[B, 1]`.
pub fn mr_forward(
    tape: &mut Tape,
    cfg: &MrConfig,
    params: &BoundParams,
    r: Var,
    candidate: Var,
    mode: Mode,
) -> Result<Var> {
    let half = cfg.input_channels / 2;
    check_input(tape, r, half, cfg.segment_len)?;
    check_input(tape, candidate, half, cfg.segment_len)?;
    if tape.value(r).shape()[0] != tape.value(candidate).shape()[0] {
        return Err(dim_err!("batch mismatch between input and candidate"));
    }
    let mut p = params.cursor();
    let mut h = tape.concat_channels(r, candidate)?;
    for (j, b) in cfg.blocks().iter().enumerate() {
        h = block(tape, &mut p, h, b, false, Stage::Hidden { index: j as u64 }, mode)?;
    }
    let pooled = tape.adaptive_avg_pool1d(h)?;
    let (w, b) = (p.next()?, p.next()?);
    let logits = tape.linear(pooled, w, b)?;
    p.finish()?;
    Ok(tape.sigmoid(logits))
}
