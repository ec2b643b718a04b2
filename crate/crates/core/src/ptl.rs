//! Progressive transfer: each pass trains on the previous pass's
//! restorations and starts from its best weights.

use alloc::vec::Vec;

use crate::dataset::{Dataset, DatasetSplits, Record, Split};
use crate::error::{Error, Result};
use crate::models::{ArConfig, ParamStore};
use crate::rng::{self, stream};
use crate::signal::{normalize_segment, ComplexSignal};
use crate::training::{baseline_snr, restore_batch, train_corenet, Networks, PassResult, TrainConfig, TrainObserver};

#[derive(Debug, Clone, PartialEq)]
pub struct PtlPlan {
    pub num_passes: usize,
    pub train: TrainConfig,
    /// Replaces `train` for the pass at the same index.
    pub overrides: Vec<Option<TrainConfig>>,
}

impl PtlPlan {
    pub fn new(num_passes: usize, train: TrainConfig) -> Self {
        Self { num_passes, train, overrides: Vec::new() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_passes == 0 {
            return Err(Error::Parameter("a transfer plan needs at least one pass".into()));
        }
        Ok(())
    }

    /// Training config of pass `k`. Pass 0 uses the base seed unchanged, so
    /// a one-pass plan is exactly a single training run.
    pub fn config_for(&self, k: usize) -> TrainConfig {
        if let Some(Some(c)) = self.overrides.get(k) {
            return c.clone();
        }
        let mut c = self.train.clone();
        if k > 0 {
            c.seed = rng::derive(self.train.seed, &[stream::PASS, k as u64]);
        }
        c
    }
}

/// Passes a signal through the apprentice and re-normalizes the output.
pub fn restore_dataset(cfg: &ArConfig, ar: &ParamStore, data: &Dataset, batch_size: usize) -> Result<Dataset> {
    let mut records = Vec::with_capacity(data.len());
    for chunk in data.records.chunks(batch_size.max(1)) {
        let inputs: Vec<_> = chunk.iter().map(|r| &r.corrupted).collect();
        let restored = restore_batch(cfg, ar, &inputs)?;
        for (rec, out) in chunk.iter().zip(restored) {
            records.push(Record { corrupted: normalize_segment(&out).signal, ..rec.clone() });
        }
    }
    Ok(Dataset { records })
}

/// Applies each stage of a saved chain in order, re-normalizing between
/// stages exactly as [`run_ptl`] does between passes.
pub fn restore_chain(stages: &[(ArConfig, ParamStore)], inputs: &[ComplexSignal]) -> Result<Vec<ComplexSignal>> {
    let mut current = inputs.to_vec();
    for (cfg, ar) in stages {
        let refs: Vec<_> = current.iter().collect();
        current = restore_batch(cfg, ar, &refs)?.iter().map(|s| normalize_segment(s).signal).collect();
    }
    Ok(current)
}

/// Mean SNR of each split against its clean references; `None` for an
/// empty split.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSnr {
    pub train: Option<f64>,
    pub val: Option<f64>,
    pub test: Option<f64>,
}

impl SplitSnr {
    pub fn of(splits: &DatasetSplits) -> Self {
        let m = |d: &Dataset| (!d.is_empty()).then(|| baseline_snr(d));
        Self { train: m(&splits.train), val: m(&splits.val), test: m(&splits.test) }
    }
}

#[derive(Debug, Clone)]
pub struct PassOutcome {
    pub result: PassResult,
    pub input_snr: SplitSnr,
    pub restored_snr: SplitSnr,
}

/// Hooks for a transfer run, on top of the per-pass training hooks.
pub trait PtlObserver: TrainObserver {
    fn on_pass_end(&mut self, _outcome: &PassOutcome, _restored: &DatasetSplits) -> Result<()> {
        Ok(())
    }
}

impl PtlObserver for () {}

/// Runs every pass of `plan` from `init` on `base`. A failing pass stops
/// the chain; passes already reported to the observer stay valid.
pub fn run_ptl<O: PtlObserver + ?Sized>(
    plan: &PtlPlan,
    base: &DatasetSplits,
    init: Networks,
    observer: &mut O,
) -> Result<Vec<PassOutcome>> {
    plan.validate()?;
    let mut outcomes = Vec::with_capacity(plan.num_passes);
    let mut inputs = base.clone();
    let mut nets = init;
    for k in 0..plan.num_passes {
        let cfg = plan.config_for(k);
        let input_snr = SplitSnr::of(&inputs);
        let result = train_corenet(&inputs.train, &inputs.val, &cfg, nets, k, observer)?;
        let best = &result.best;
        let mut restored = DatasetSplits::default();
        for split in Split::ALL {
            *restored.get_mut(split) =
                restore_dataset(&best.ar_config, &best.ar_params, inputs.get(split), cfg.batch_size)?;
        }
        nets = Networks::from_checkpoint(best);
        let outcome = PassOutcome { result, input_snr, restored_snr: SplitSnr::of(&restored) };
        observer.on_pass_end(&outcome, &restored)?;
        outcomes.push(outcome);
        inputs = restored;
    }
    Ok(outcomes)
}
