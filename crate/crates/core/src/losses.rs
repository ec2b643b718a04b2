//! Apprentice and master losses on the tape.
//!
//! Every PSNR-style term is computed per batch item and then averaged.

use alloc::format;
use alloc::vec::Vec;

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::metrics::{self, MSE_FLOOR, Y_CLEAN};
use crate::models::{mr_forward, BoundParams, Mode, MrConfig};
use crate::spectrogram::SpectrogramConfig;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub epsilon: f64,
    pub beta: f64,
    pub phi: f64,
    pub psnr_target_db: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { epsilon: 1.0, beta: 10.0, phi: 1.0, psnr_target_db: 40.0 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.epsilon, self.beta, self.phi, self.psnr_target_db];
        if all.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(Error::Parameter(format!("loss weights must be positive, got {self:?}")));
        }
        Ok(())
    }
}

/// Tape handles of the apprentice loss and its terms, each `[1]`.
#[derive(Debug, Clone, Copy)]
pub struct ApprenticeLoss {
    pub total: Var,
    pub fidelity: Var,
    pub time: Var,
    pub freq: Var,
}

/// Per-item PSNR `[B]` of `candidate` against the constant `clean`, both
/// `[B, ...]`. The peak is the largest clean value of each item.
pub fn psnr_items(tape: &mut Tape, clean: Var, candidate: Var) -> Result<Var> {
    let (batch, per) = tape.value(clean).items();
    let peaks: Vec<f32> = tape
        .value(clean)
        .data()
        .chunks(per)
        .map(|c| {
            let p = f64::from(c.iter().copied().fold(f32::NEG_INFINITY, f32::max));
            (10.0 * libm::log10((p * p).max(MSE_FLOOR))) as f32
        })
        .collect();
    let peaks = tape.constant(Tensor::new(&[batch], peaks)?);
    let diff = tape.sub(candidate, clean)?;
    let sq = tape.square(diff);
    let mse = tape.mean_items(sq);
    let mse = tape.clamp_min(mse, MSE_FLOOR as f32);
    let log = tape.log10(mse);
    let neg = tape.scale(log, -10.0);
    tape.add(peaks, neg)
}

/// `mean((pred - target)²)` against a constant per-item target.
fn mse_to(tape: &mut Tape, pred: Var, target: &[f32]) -> Result<Var> {
    let t = tape.constant(Tensor::new(tape.value(pred).shape(), target.to_vec())?);
    let d = tape.sub(pred, t)?;
    let sq = tape.square(d);
    Ok(tape.mean_all(sq))
}

/// `L_A = ε·L_fid + β·L_time + φ·L_freq`.
///
/// `r` and `s` are constants, `s_hat` carries the apprentice graph, and
/// `mr` must be bound as constants so no master gradient is formed.
#[allow(clippy::too_many_arguments)]
pub fn loss_apprentice(
    tape: &mut Tape,
    r: Var,
    s: Var,
    s_hat: Var,
    mr_cfg: &MrConfig,
    mr: &BoundParams,
    weights: &LossWeights,
    spec: SpectrogramConfig,
) -> Result<ApprenticeLoss> {
    if mr.vars().iter().any(|&v| tape.requires_grad(v)) {
        return Err(Error::Contract("master parameters must be frozen for the apprentice loss".into()));
    }
    let batch = tape.value(s).shape()[0];
    let pred = mr_forward(tape, mr_cfg, mr, r, s_hat, Mode::Eval)?;
    let fidelity = mse_to(tape, pred, &alloc::vec![Y_CLEAN as f32; batch])?;

    let p_time = psnr_items(tape, s, s_hat)?;
    let m_time = tape.mean_all(p_time);
    let time = tape.scale(m_time, -1.0);

    let spec_s = tape.spectrogram(s, spec)?;
    let spec_hat = tape.spectrogram(s_hat, spec)?;
    let p_freq = psnr_items(tape, spec_s, spec_hat)?;
    let m_freq = tape.mean_all(p_freq);
    let freq = tape.scale(m_freq, -1.0);

    let a = tape.scale(fidelity, weights.epsilon as f32);
    let b = tape.scale(time, weights.beta as f32);
    let c = tape.scale(freq, weights.phi as f32);
    let ab = tape.add(a, b)?;
    let total = tape.add(ab, c)?;
    Ok(ApprenticeLoss { total, fidelity, time, freq })
}

/// Normalized-PSNR labels `y_res` for each item of planar `[B, 2, L]` data.
pub fn y_res_labels(clean: &Tensor, restored: &Tensor, psnr_target_db: f64) -> Result<Vec<f32>> {
    let (_, per) = clean.items();
    clean
        .data()
        .chunks(per)
        .zip(restored.data().chunks(per))
        .map(|(c, h)| Ok((metrics::psnr_slices(c, h)? / psnr_target_db).clamp(0.0, 1.0) as f32))
        .collect()
}

/// `L_M = ½(MSE(M(r, s), 1) + MSE(M(r, ŝ), y_res))`.
///
/// `r`, `s`, and `s_hat` must be constants; `mode` drives master dropout.
#[allow(clippy::too_many_arguments)]
pub fn loss_master(
    tape: &mut Tape,
    r: Var,
    s: Var,
    s_hat: Var,
    mr_cfg: &MrConfig,
    mr: &BoundParams,
    psnr_target_db: f64,
    mode: Mode,
) -> Result<Var> {
    if [r, s, s_hat].iter().any(|&v| tape.requires_grad(v)) {
        return Err(Error::Contract("signals must be constants for the master loss".into()));
    }
    let batch = tape.value(s).shape()[0];
    let labels = y_res_labels(tape.value(s), tape.value(s_hat), psnr_target_db)?;
    let (mode_clean, mode_res) = match mode {
        Mode::Train { seed } => (
            Mode::Train { seed: crate::rng::derive(seed, &[0]) },
            Mode::Train { seed: crate::rng::derive(seed, &[1]) },
        ),
        Mode::Eval => (Mode::Eval, Mode::Eval),
    };
    let m_clean = mr_forward(tape, mr_cfg, mr, r, s, mode_clean)?;
    let m_res = mr_forward(tape, mr_cfg, mr, r, s_hat, mode_res)?;
    let a = mse_to(tape, m_clean, &alloc::vec![Y_CLEAN as f32; batch])?;
    let b = mse_to(tape, m_res, &labels)?;
    let sum = tape.add(a, b)?;
    Ok(tape.scale(sum, 0.5))
}
