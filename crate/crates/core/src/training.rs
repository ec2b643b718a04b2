//! One cooperative pass: per mini-batch, one apprentice update with the
//! master frozen, then one master update with the restoration detached.

use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::autodiff::{Tape, Tensor, Var};
use crate::dataset::{Dataset, Record};
use crate::error::{Error, NonFiniteSnapshot, Result};
use crate::losses::{loss_apprentice, loss_master, y_res_labels, LossWeights};
use crate::metrics::{snr_db, Y_CLEAN};
use crate::models::{ar_forward, mr_forward, ArConfig, BoundParams, Checkpoint, Mode, MrConfig, ParamStore};
use crate::optim::{cosine_lr, AdamConfig, AdamState};
use crate::rng::{self, stream};
use crate::signal::{ComplexSignal, SEGMENT_LEN};
use crate::spectrogram::SpectrogramConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub batch_size: usize,
    pub lr_ar: f64,
    pub lr_mr: f64,
    /// Scheduler period in iterations.
    pub t_max: u64,
    pub loss_weights: LossWeights,
    pub spectrogram: SpectrogramConfig,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_epochs: 1000,
            batch_size: 64,
            lr_ar: 5e-3,
            lr_mr: 5e-3,
            t_max: 100,
            loss_weights: LossWeights::default(),
            spectrogram: SpectrogramConfig::default(),
            adam: AdamConfig::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, train_len: usize) -> Result<()> {
        self.loss_weights.validate()?;
        self.spectrogram.validate(SEGMENT_LEN)?;
        let lrs_ok = [self.lr_ar, self.lr_mr].iter().all(|v| v.is_finite() && *v > 0.0);
        if self.max_epochs == 0 || self.batch_size == 0 || self.t_max == 0 || !lrs_ok {
            return Err(Error::Parameter(format!("invalid training config {self:?}")));
        }
        if self.batch_size > train_len {
            return Err(Error::Parameter(format!(
                "batch size {} exceeds training set size {train_len}",
                self.batch_size
            )));
        }
        Ok(())
    }
}

/// One row of the epoch log. Epoch 0 is the evaluation before any update
/// and has no training losses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub losses: Option<EpochLosses>,
    pub val_snr_db: f64,
    pub mr_val_mse: f64,
}

/// Batch-mean loss values over one epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLosses {
    pub apprentice: f64,
    pub fidelity: f64,
    pub time: f64,
    pub freq: f64,
    pub master: f64,
}

#[derive(Debug, Clone)]
pub struct PassResult {
    pub pass_index: usize,
    pub best: Checkpoint,
    pub last: Checkpoint,
    pub epoch_log: Vec<EpochLog>,
}

impl PassResult {
    pub fn best_epoch(&self) -> usize {
        self.best.epoch
    }
}

/// Points in the batch loop exposed to observers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    BeforeApprentice,
    AfterApprentice,
    AfterMaster,
}

/// Hooks into a running pass. All methods default to no-ops.
pub trait TrainObserver {
    fn on_step(&mut self, _phase: Phase, _epoch: usize, _batch: usize, _ar: &ParamStore, _mr: &ParamStore) {}

    /// Called after each epoch's validation, including epoch 0. `last`
    /// reflects the state after that epoch.
    fn on_epoch(&mut self, _log: &EpochLog, _last: &Checkpoint, _is_best: bool) -> Result<()> {
        Ok(())
    }
}

impl TrainObserver for () {}

/// Both networks plus everything the pass mutates.
#[derive(Debug, Clone)]
pub struct Networks {
    pub ar_config: ArConfig,
    pub mr_config: MrConfig,
    pub ar: ParamStore,
    pub mr: ParamStore,
}

impl Networks {
    pub fn init(ar_config: ArConfig, mr_config: MrConfig, master_seed: u64) -> Result<Self> {
        let ar = crate::models::init_ar(&ar_config, master_seed)?;
        let mr = crate::models::init_mr(&mr_config, master_seed)?;
        Ok(Self { ar_config, mr_config, ar, mr })
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Self {
        Self {
            ar_config: ckpt.ar_config.clone(),
            mr_config: ckpt.mr_config.clone(),
            ar: ckpt.ar_params.clone(),
            mr: ckpt.mr_params.clone(),
        }
    }
}

/// Channel-major `[B, 2, L]` tensor of the chosen field of each record.
pub fn stack<'a>(signals: impl ExactSizeIterator<Item = &'a ComplexSignal>) -> Result<Tensor> {
    let n = signals.len();
    let mut data = Vec::with_capacity(n * 2 * SEGMENT_LEN);
    for s in signals {
        s.write_planar(&mut data);
    }
    Tensor::new(&[n, 2, SEGMENT_LEN], data)
}

/// Splits a `[B, 2, L]` tensor back into signals.
pub fn unstack(t: &Tensor) -> Result<Vec<ComplexSignal>> {
    let (_, per) = t.items();
    t.data().chunks(per).map(ComplexSignal::from_planar).collect()
}

/// Evaluation-mode restoration of a batch of signals.
pub fn restore_batch(cfg: &ArConfig, ar: &ParamStore, inputs: &[&ComplexSignal]) -> Result<Vec<ComplexSignal>> {
    let mut tape = Tape::new();
    let x = tape.constant(stack(inputs.iter().copied())?);
    let p = BoundParams::bind(&mut tape, ar, false);
    let y = ar_forward(&mut tape, cfg, &p, x, Mode::Eval)?;
    unstack(tape.value(y))
}

/// Evaluation-mode master scores `M(r, candidate)`.
pub fn master_scores(
    cfg: &MrConfig,
    mr: &ParamStore,
    inputs: &[&ComplexSignal],
    candidates: &[&ComplexSignal],
) -> Result<Vec<f32>> {
    let mut tape = Tape::new();
    let r = tape.constant(stack(inputs.iter().copied())?);
    let c = tape.constant(stack(candidates.iter().copied())?);
    let p = BoundParams::bind(&mut tape, mr, false);
    let y = mr_forward(&mut tape, cfg, &p, r, c, Mode::Eval)?;
    Ok(tape.value(y).data().to_vec())
}

/// Validation statistics of one evaluation sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValStats {
    /// Mean SNR of the apprentice's restorations against the clean signals.
    pub snr_db: f64,
    /// Mean squared error of the master against `y_clean` and `y_res`,
    /// averaged over both label sets.
    pub mr_mse: f64,
}

/// Mean validation SNR of the apprentice in evaluation mode.
pub fn validate(cfg: &ArConfig, ar: &ParamStore, val: &Dataset, batch_size: usize) -> Result<f64> {
    if val.is_empty() {
        return Err(Error::Parameter("validation split is empty".into()));
    }
    let mut total = 0.0;
    for chunk in val.records.chunks(batch_size.max(1)) {
        let inputs: Vec<_> = chunk.iter().map(|r| &r.corrupted).collect();
        let restored = restore_batch(cfg, ar, &inputs)?;
        total += chunk.iter().zip(&restored).map(|(r, h)| snr_db(&r.clean, h)).sum::<f64>();
    }
    Ok(total / val.len() as f64)
}

/// Validation SNR and master label error in one sweep.
pub fn validate_pair(nets: &Networks, val: &Dataset, batch_size: usize, psnr_target_db: f64) -> Result<ValStats> {
    if val.is_empty() {
        return Err(Error::Parameter("validation split is empty".into()));
    }
    let (mut snr, mut sq) = (0.0, 0.0);
    for chunk in val.records.chunks(batch_size.max(1)) {
        let inputs: Vec<_> = chunk.iter().map(|r| &r.corrupted).collect();
        let cleans: Vec<_> = chunk.iter().map(|r| &r.clean).collect();
        let restored = restore_batch(&nets.ar_config, &nets.ar, &inputs)?;
        snr += chunk.iter().zip(&restored).map(|(r, h)| snr_db(&r.clean, h)).sum::<f64>();

        let restored_refs: Vec<_> = restored.iter().collect();
        let labels = y_res_labels(
            &stack(cleans.iter().copied())?,
            &stack(restored_refs.iter().copied())?,
            psnr_target_db,
        )?;
        let on_clean = master_scores(&nets.mr_config, &nets.mr, &inputs, &cleans)?;
        let on_res = master_scores(&nets.mr_config, &nets.mr, &inputs, &restored_refs)?;
        let sq_err = |m: f32, y: f64| (f64::from(m) - y) * (f64::from(m) - y);
        sq += on_clean.iter().map(|&m| sq_err(m, Y_CLEAN)).sum::<f64>();
        sq += on_res.iter().zip(&labels).map(|(&m, &y)| sq_err(m, f64::from(y))).sum::<f64>();
    }
    let n = val.len() as f64;
    Ok(ValStats { snr_db: snr / n, mr_mse: sq / (2.0 * n) })
}

/// Mean SNR of the stored corrupted signals against their clean references.
pub fn baseline_snr(data: &Dataset) -> f64 {
    data.records.iter().map(|r| snr_db(&r.clean, &r.corrupted)).sum::<f64>() / data.len().max(1) as f64
}

struct StepValues {
    apprentice: f64,
    fidelity: f64,
    time: f64,
    freq: f64,
    master: f64,
}

fn scalar(tape: &Tape, v: Var) -> f64 {
    f64::from(tape.value(v).data()[0])
}

fn leaf_grads(grads: &mut crate::autodiff::Gradients, params: &BoundParams, store: &ParamStore) -> Vec<Vec<f32>> {
    params
        .vars()
        .iter()
        .zip(store.tensors())
        .map(|(&v, t)| grads.take(v).unwrap_or_else(|| alloc::vec![0.0; t.numel()]))
        .collect()
}

struct Trainer<'a, O: TrainObserver + ?Sized> {
    nets: Networks,
    cfg: &'a TrainConfig,
    ar_opt: AdamState,
    mr_opt: AdamState,
    iteration: u64,
    pass_index: usize,
    observer: &'a mut O,
}

impl<O: TrainObserver + ?Sized> Trainer<'_, O> {
    fn batch(&mut self, records: &[&Record], epoch: usize, b: usize) -> Result<StepValues> {
        let cfg = self.cfg;
        let clean = stack(records.iter().map(|r| &r.clean))?;
        let corrupted = stack(records.iter().map(|r| &r.corrupted))?;
        let drop_seed = rng::derive(cfg.seed, &[stream::DROPOUT, epoch as u64, b as u64]);
        let lr_ar = cosine_lr(self.iteration, cfg.lr_ar, cfg.t_max);
        let lr_mr = cosine_lr(self.iteration, cfg.lr_mr, cfg.t_max);

        self.observer.on_step(Phase::BeforeApprentice, epoch, b, &self.nets.ar, &self.nets.mr);
        let mut tape = Tape::new();
        let r = tape.constant(corrupted.clone());
        let s = tape.constant(clean.clone());
        let arp = BoundParams::bind(&mut tape, &self.nets.ar, true);
        let mrp = BoundParams::bind(&mut tape, &self.nets.mr, false);
        let ar_mode = Mode::Train { seed: rng::derive(drop_seed, &[0]) };
        let s_hat = ar_forward(&mut tape, &self.nets.ar_config, &arp, r, ar_mode)?;
        let la = loss_apprentice(&mut tape, r, s, s_hat, &self.nets.mr_config, &mrp, &cfg.loss_weights, cfg.spectrogram)?;
        let mut vals = StepValues {
            apprentice: scalar(&tape, la.total),
            fidelity: scalar(&tape, la.fidelity),
            time: scalar(&tape, la.time),
            freq: scalar(&tape, la.freq),
            master: f64::NAN,
        };
        let restored = tape.value(s_hat).clone();
        if !vals.apprentice.is_finite() {
            return Err(self.abort(&vals, epoch, b));
        }
        let mut grads = tape.backward(la.total)?;
        let ar_grads = leaf_grads(&mut grads, &arp, &self.nets.ar);
        self.ar_opt.step(&mut self.nets.ar, &ar_grads, lr_ar)?;
        self.observer.on_step(Phase::AfterApprentice, epoch, b, &self.nets.ar, &self.nets.mr);

        let mut tape = Tape::new();
        let r = tape.constant(corrupted);
        let s = tape.constant(clean);
        let s_hat = tape.constant(restored);
        let mrp = BoundParams::bind(&mut tape, &self.nets.mr, true);
        let mr_mode = Mode::Train { seed: rng::derive(drop_seed, &[1]) };
        let lm = loss_master(
            &mut tape,
            r,
            s,
            s_hat,
            &self.nets.mr_config,
            &mrp,
            cfg.loss_weights.psnr_target_db,
            mr_mode,
        )?;
        vals.master = scalar(&tape, lm);
        if !vals.master.is_finite() {
            return Err(self.abort(&vals, epoch, b));
        }
        let mut grads = tape.backward(lm)?;
        let mr_grads = leaf_grads(&mut grads, &mrp, &self.nets.mr);
        self.mr_opt.step(&mut self.nets.mr, &mr_grads, lr_mr)?;
        self.observer.on_step(Phase::AfterMaster, epoch, b, &self.nets.ar, &self.nets.mr);

        self.iteration += 1;
        Ok(vals)
    }

    fn abort(&self, v: &StepValues, epoch: usize, batch: usize) -> Error {
        Error::NonFinite(NonFiniteSnapshot {
            pass_index: self.pass_index,
            epoch,
            batch,
            loss_apprentice: v.apprentice,
            loss_fidelity: v.fidelity,
            loss_time: v.time,
            loss_freq: v.freq,
            loss_master: v.master,
        })
    }

    fn checkpoint(&self, epoch: usize, val_snr_db: f64) -> Checkpoint {
        Checkpoint {
            ar_config: self.nets.ar_config.clone(),
            mr_config: self.nets.mr_config.clone(),
            ar_params: self.nets.ar.clone(),
            mr_params: self.nets.mr.clone(),
            ar_optimizer: self.ar_opt.clone(),
            mr_optimizer: self.mr_opt.clone(),
            pass_index: self.pass_index,
            epoch,
            val_snr_db,
            master_seed: self.cfg.seed,
        }
    }
}

/// Runs one pass of cooperative training from `init`, returning the
/// best-by-validation-SNR checkpoint (ties keep the earlier epoch).
pub fn train_corenet<O: TrainObserver + ?Sized>(
    train: &Dataset,
    val: &Dataset,
    cfg: &TrainConfig,
    init: Networks,
    pass_index: usize,
    observer: &mut O,
) -> Result<PassResult> {
    cfg.validate(train.len())?;
    init.ar_config.validate()?;
    init.mr_config.validate()?;
    if val.is_empty() {
        return Err(Error::Parameter("validation split is empty".into()));
    }
    let ar_opt = AdamState::new(&init.ar, cfg.adam);
    let mr_opt = AdamState::new(&init.mr, cfg.adam);
    let mut t = Trainer { nets: init, cfg, ar_opt, mr_opt, iteration: 0, pass_index, observer };

    let target = cfg.loss_weights.psnr_target_db;
    let stats = validate_pair(&t.nets, val, cfg.batch_size, target)?;
    let log0 = EpochLog { epoch: 0, losses: None, val_snr_db: stats.snr_db, mr_val_mse: stats.mr_mse };
    let mut best = t.checkpoint(0, stats.snr_db);
    t.observer.on_epoch(&log0, &best, true)?;
    let mut epoch_log = alloc::vec![log0];

    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 1..=cfg.max_epochs {
        order.sort_unstable();
        order.shuffle(&mut rng::rng_from(rng::derive(cfg.seed, &[stream::SHUFFLE, epoch as u64])));
        let mut sums = [0.0f64; 5];
        let mut batches = 0usize;
        for (b, idx) in order.chunks(cfg.batch_size).enumerate() {
            let records: Vec<&Record> = idx.iter().map(|&i| &train.records[i]).collect();
            let v = t.batch(&records, epoch, b)?;
            for (s, x) in sums.iter_mut().zip([v.apprentice, v.fidelity, v.time, v.freq, v.master]) {
                *s += x;
            }
            batches += 1;
        }
        let n = batches as f64;
        let losses = EpochLosses {
            apprentice: sums[0] / n,
            fidelity: sums[1] / n,
            time: sums[2] / n,
            freq: sums[3] / n,
            master: sums[4] / n,
        };
        let stats = validate_pair(&t.nets, val, cfg.batch_size, target)?;
        let log = EpochLog { epoch, losses: Some(losses), val_snr_db: stats.snr_db, mr_val_mse: stats.mr_mse };
        let last = t.checkpoint(epoch, stats.snr_db);
        let is_best = stats.snr_db > best.val_snr_db;
        if is_best {
            best = last.clone();
        }
        t.observer.on_epoch(&log, &last, is_best)?;
        epoch_log.push(log);
    }
    let last = t.checkpoint(cfg.max_epochs, epoch_log.last().map_or(f64::NAN, |l| l.val_snr_db));
    Ok(PassResult { pass_index, best, last, epoch_log })
}
