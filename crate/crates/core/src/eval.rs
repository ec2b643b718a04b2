//! Aggregation of per-record SNRs into restoration reports.
//!
//! The corrupted baseline of a record is its stored achieved SNR, measured
//! before normalization.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::dataset::Dataset;
use crate::error::{dim_err, Result};
use crate::metrics::snr_db;
use crate::signal::ComplexSignal;
use crate::waveform::Modulation;

/// Per-record inputs of a report.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecordScore {
    pub modulation: Modulation,
    pub target_snr_db: f32,
    pub baseline_snr_db: f64,
    pub restored_snr_db: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Group {
    pub count: usize,
    pub mean_restored_db: f64,
    pub mean_baseline_db: f64,
}

impl Group {
    pub fn improvement_db(&self) -> f64 {
        self.mean_restored_db - self.mean_baseline_db
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub pass_index: Option<usize>,
    pub count: usize,
    pub overall_mean_snr_db: f64,
    pub corrupted_baseline_db: f64,
    /// Keyed by target level, ascending.
    pub per_snr_level: Vec<(f32, Group)>,
    pub per_modulation: Vec<(Modulation, Group)>,
    pub per_cell: Vec<(Modulation, f32, Group)>,
}

#[derive(Debug, Clone, Copy, Default)]
struct Sums {
    count: usize,
    restored: f64,
    baseline: f64,
}

impl Sums {
    fn add(&mut self, s: &RecordScore) {
        self.count += 1;
        self.restored += s.restored_snr_db;
        self.baseline += s.baseline_snr_db;
    }

    fn group(&self) -> Group {
        let n = self.count as f64;
        Group { count: self.count, mean_restored_db: self.restored / n, mean_baseline_db: self.baseline / n }
    }
}

/// Streaming accumulator; records are summed in push order.
#[derive(Debug, Clone, Default)]
pub struct EvalAccumulator {
    all: Sums,
    levels: BTreeMap<LevelKey, Sums>,
    mods: BTreeMap<u32, Sums>,
    cells: BTreeMap<(u32, LevelKey), Sums>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct LevelKey(i32);

impl LevelKey {
    /// Orders by value; `f32` levels from the grid are exact.
    fn of(v: f32) -> Self {
        let bits = v.to_bits() as i32;
        Self(if bits < 0 { i32::MIN - bits } else { bits })
    }

    fn value(self) -> f32 {
        let b = if self.0 < 0 { i32::MIN - self.0 } else { self.0 };
        f32::from_bits(b as u32)
    }
}

impl EvalAccumulator {
    pub fn push(&mut self, s: &RecordScore) {
        let level = LevelKey::of(s.target_snr_db);
        let tag = s.modulation.tag();
        self.all.add(s);
        self.levels.entry(level).or_default().add(s);
        self.mods.entry(tag).or_default().add(s);
        self.cells.entry((tag, level)).or_default().add(s);
    }

    pub fn finish(&self, pass_index: Option<usize>) -> EvalReport {
        let m = |t: u32| Modulation::from_tag(t).expect("tags come from modulations");
        let all = self.all.group();
        EvalReport {
            pass_index,
            count: self.all.count,
            overall_mean_snr_db: all.mean_restored_db,
            corrupted_baseline_db: all.mean_baseline_db,
            per_snr_level: self.levels.iter().map(|(k, v)| (k.value(), v.group())).collect(),
            per_modulation: self.mods.iter().map(|(&t, v)| (m(t), v.group())).collect(),
            per_cell: self.cells.iter().map(|(&(t, k), v)| (m(t), k.value(), v.group())).collect(),
        }
    }
}

/// Scores `candidates` (one per reference record, same order) against the
/// clean references.
pub fn score_records(reference: &Dataset, candidates: &[ComplexSignal]) -> Result<Vec<RecordScore>> {
    if candidates.len() != reference.len() {
        return Err(dim_err!("{} candidates for {} reference records", candidates.len(), reference.len()));
    }
    Ok(reference.records.iter().zip(candidates).map(|(r, c)| score(r, snr_db(&r.clean, c))).collect())
}

/// Scores the reference's own corrupted signals by their stored achieved
/// SNR, i.e. the corrupted-baseline report.
pub fn score_corrupted(reference: &Dataset) -> Vec<RecordScore> {
    reference.records.iter().map(|r| score(r, f64::from(r.achieved_snr_db))).collect()
}

pub fn score(r: &crate::dataset::Record, restored_snr_db: f64) -> RecordScore {
    RecordScore {
        modulation: r.modulation,
        target_snr_db: r.target_snr_db,
        baseline_snr_db: f64::from(r.achieved_snr_db),
        restored_snr_db,
    }
}

pub fn report(scores: &[RecordScore], pass_index: Option<usize>) -> EvalReport {
    let mut acc = EvalAccumulator::default();
    for s in scores {
        acc.push(s);
    }
    acc.finish(pass_index)
}
