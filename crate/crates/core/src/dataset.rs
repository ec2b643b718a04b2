//! Dataset layout and deterministic record synthesis.
//!
//! Each record is regenerated from `(master_seed, split, index)` alone, so
//! writers can produce records in any order or in parallel and still emit
//! identical files.

use alloc::vec::Vec;

use crate::corruption::{compose_corruption, sample_recipe_with, ArtifactSet, RecipePolicy, SnrChoice};
use crate::error::Result;
use crate::rng::{self, stream};
use crate::signal::ComplexSignal;
use crate::waveform::{generate_waveform, random_spec, Modulation};

/// Full-scale split sizes.
pub const FULL_TRAIN_VAL: usize = 62_400;
pub const FULL_TEST_PER_CELL: usize = 150;
pub const TRAIN_FRACTION: f64 = 0.8;
/// Smallest per-cell test count used when scaling down.
pub const MIN_TEST_PER_CELL: usize = 10;

/// Test-grid SNR levels: -14, -12, ..., 10 dB.
pub fn test_snr_levels() -> Vec<f64> {
    (0..13).map(|k| -14.0 + 2.0 * k as f64).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    fn stream(self) -> u64 {
        match self {
            Split::Train => stream::TRAIN,
            Split::Val => stream::VAL,
            Split::Test => stream::TEST,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetConfig {
    pub train_count: usize,
    pub val_count: usize,
    pub test_per_cell: usize,
    /// Target SNR range for train/val pairs.
    pub train_snr_range: (f64, f64),
    pub test_snr_levels: Vec<f64>,
    pub subsets: Vec<ArtifactSet>,
    pub modulations: Vec<Modulation>,
    pub master_seed: u64,
}

impl DatasetConfig {
    pub fn full(master_seed: u64) -> Self {
        Self::scaled(1.0, master_seed)
    }

    /// Proportionally reduced dataset. Train/val keep the 80/20 split; the
    /// test grid keeps every (modulation, SNR) cell with at least
    /// [`MIN_TEST_PER_CELL`] pairs.
    pub fn scaled(scale: f64, master_seed: u64) -> Self {
        let train_val = libm::round(FULL_TRAIN_VAL as f64 * scale) as usize;
        let train_count = libm::round(train_val as f64 * TRAIN_FRACTION) as usize;
        let per_cell = (libm::round(FULL_TEST_PER_CELL as f64 * scale) as usize).max(MIN_TEST_PER_CELL);
        Self {
            train_count,
            val_count: train_val - train_count,
            test_per_cell: if scale >= 1.0 { FULL_TEST_PER_CELL.max(per_cell) } else { per_cell },
            train_snr_range: crate::corruption::SNR_RANGE_DB,
            test_snr_levels: test_snr_levels(),
            subsets: ArtifactSet::ALL_SUBSETS.to_vec(),
            modulations: Modulation::ALL.to_vec(),
            master_seed,
        }
    }

    pub fn test_count(&self) -> usize {
        self.modulations.len() * self.test_snr_levels.len() * self.test_per_cell
    }

    pub fn count(&self, split: Split) -> usize {
        match split {
            Split::Train => self.train_count,
            Split::Val => self.val_count,
            Split::Test => self.test_count(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(crate::Error::Parameter(m.into()));
        if self.train_count == 0 || self.val_count == 0 {
            return bad("train and validation counts must be positive");
        }
        if self.modulations.is_empty() || self.subsets.is_empty() {
            return bad("dataset needs at least one modulation and one artifact subset");
        }
        let (lo, hi) = self.train_snr_range;
        if !(lo < hi) {
            return bad("train SNR range is empty");
        }
        Ok(())
    }

    /// Modulation and target-SNR choice of a record.
    pub fn cell(&self, split: Split, index: usize) -> (Modulation, SnrChoice) {
        match split {
            Split::Train | Split::Val => {
                let m = self.modulations[index % self.modulations.len()];
                (m, SnrChoice::Uniform(self.train_snr_range.0, self.train_snr_range.1))
            }
            Split::Test => {
                let per_mod = self.test_snr_levels.len() * self.test_per_cell;
                let m = self.modulations[index / per_mod];
                let level = self.test_snr_levels[(index % per_mod) / self.test_per_cell];
                (m, SnrChoice::Fixed(level))
            }
        }
    }
}

/// One stored pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub modulation: Modulation,
    pub target_snr_db: f32,
    pub achieved_snr_db: f32,
    pub clean: ComplexSignal,
    pub corrupted: ComplexSignal,
}

/// Synthesizes record `index` of `split`.
pub fn generate_record(config: &DatasetConfig, split: Split, index: usize) -> Result<Record> {
    let seed = rng::derive(config.master_seed, &[split.stream(), index as u64]);
    let (modulation, snr) = config.cell(split, index);
    let wave_seed = rng::derive(seed, &[stream::WAVEFORM]);
    let spec = random_spec(modulation, wave_seed);
    let clean = generate_waveform(&spec)?;
    let policy = RecipePolicy { subsets: config.subsets.clone(), snr };
    let recipe = sample_recipe_with(seed, &policy);
    debug_assert!(recipe.interference.as_ref().is_none_or(|i| i.seed != spec.seed));
    let pair = compose_corruption(&clean, modulation, &recipe)?;
    Ok(Record {
        modulation,
        target_snr_db: recipe.target_snr_db as f32,
        achieved_snr_db: pair.achieved_snr_db as f32,
        clean: pair.clean,
        corrupted: pair.corrupted,
    })
}

/// An ordered collection of records.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub records: Vec<Record>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DatasetSplits {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

impl DatasetSplits {
    pub fn get(&self, split: Split) -> &Dataset {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }

    pub fn get_mut(&mut self, split: Split) -> &mut Dataset {
        match split {
            Split::Train => &mut self.train,
            Split::Val => &mut self.val,
            Split::Test => &mut self.test,
        }
    }
}

pub fn build_split(config: &DatasetConfig, split: Split) -> Result<Dataset> {
    let records = (0..config.count(split))
        .map(|i| generate_record(config, split, i))
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset { records })
}

/// Builds all three splits in memory.
pub fn build_dataset(config: &DatasetConfig) -> Result<DatasetSplits> {
    config.validate()?;
    Ok(DatasetSplits {
        train: build_split(config, Split::Train)?,
        val: build_split(config, Split::Val)?,
        test: build_split(config, Split::Test)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_scale_counts() {
        let c = DatasetConfig::full(1);
        assert_eq!(c.train_count + c.val_count, 62_400);
        assert_eq!(c.train_count, 49_920);
        assert_eq!(c.val_count, 12_480);
        assert_eq!(c.test_count(), 23_400);
        assert_eq!(c.train_count + c.val_count + c.test_count(), 85_800);
    }

    #[test]
    fn toy_scale_counts() {
        let c = DatasetConfig::scaled(0.01, 1);
        assert_eq!(c.train_count + c.val_count, 624);
        assert_eq!(c.train_count, 499);
        assert_eq!(c.test_count(), 1_560);
    }

    #[test]
    fn test_grid_cells() {
        let c = DatasetConfig::scaled(0.01, 1);
        let mut counts = alloc::collections::BTreeMap::new();
        for i in 0..c.test_count() {
            let (m, snr) = c.cell(Split::Test, i);
            let SnrChoice::Fixed(level) = snr else { panic!() };
            *counts.entry((m, (level * 10.0) as i64)).or_insert(0) += 1;
        }
        assert_eq!(counts.len(), 12 * 13);
        assert!(counts.values().all(|&n| n == 10));
    }

    #[test]
    fn records_are_reproducible() {
        let c = DatasetConfig::scaled(0.001, 42);
        assert_eq!(generate_record(&c, Split::Val, 3).unwrap(), generate_record(&c, Split::Val, 3).unwrap());
        assert_ne!(generate_record(&c, Split::Val, 3).unwrap(), generate_record(&c, Split::Train, 3).unwrap());
    }
}
