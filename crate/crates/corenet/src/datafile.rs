//! Dataset directories: `records.bin` holds fixed-size little-endian
//! records for every split in order, and `manifest.json` describes them.
//!
//! Record layout: u32 modulation tag, f32 target SNR, f32 achieved SNR,
//! then clean and corrupted signals, each I block followed by Q block.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use corenet_core::dataset::{generate_record, Dataset, DatasetConfig, DatasetSplits, Record, Split};
use corenet_core::waveform::Modulation;
use corenet_core::{ComplexSignal, SEGMENT_LEN};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsutil::{atomic_write, read_json, sha256_hex, write_json};

pub const DATASET_FORMAT_VERSION: u32 = 1;
pub const RECORD_BYTES: usize = 12 + 2 * 2 * SEGMENT_LEN * 4;
pub const RECORDS_FILE: &str = "records.bin";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitEntry {
    pub name: String,
    pub first: usize,
    pub count: usize,
}

/// Where a restored dataset came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub source_records_sha256: String,
    /// Checkpoint digests, applied in order.
    pub checkpoints_sha256: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub record_bytes: usize,
    pub total: usize,
    pub splits: Vec<SplitEntry>,
    pub master_seed: u64,
    /// Resolved generator settings (the `dataset` section of a run config).
    pub generator: Option<crate::config::DatasetSection>,
    pub choices: BTreeMap<String, String>,
    pub records_sha256: String,
    pub provenance: Option<Provenance>,
}

impl DatasetManifest {
    pub fn count(&self, split: Split) -> usize {
        self.splits.iter().find(|s| s.name == split.name()).map_or(0, |s| s.count)
    }
}

/// Modelling choices the generator makes that the benchmark leaves open.
pub fn generator_choices() -> BTreeMap<String, String> {
    let mut m = BTreeMap::new();
    m.insert("mixing_weights".into(), "uniform(0.1, 1.0) per active artifact".into());
    m.insert("subset_selection".into(), "uniform over configured artifact subsets".into());
    m.insert("snr_measure".into(), "joint I/Q power ratio before normalization".into());
    m.insert("normalization".into(), "per-channel min-max to [-1, 1] after corruption".into());
    m
}

/// Generates the requested splits in parallel; records keep their index
/// order, so the result does not depend on the thread count.
pub fn synthesize(config: &DatasetConfig, splits: &[Split]) -> Result<DatasetSplits> {
    config.validate()?;
    let mut out = DatasetSplits::default();
    for &split in splits {
        let records = (0..config.count(split))
            .into_par_iter()
            .map(|i| generate_record(config, split, i))
            .collect::<corenet_core::Result<Vec<_>>>()?;
        *out.get_mut(split) = Dataset { records };
    }
    Ok(out)
}

pub fn encode(splits: &DatasetSplits) -> Vec<u8> {
    let total: usize = Split::ALL.iter().map(|&s| splits.get(s).len()).sum();
    let mut out = Vec::with_capacity(total * RECORD_BYTES);
    let mut planar = Vec::with_capacity(2 * SEGMENT_LEN);
    for split in Split::ALL {
        for r in &splits.get(split).records {
            out.extend_from_slice(&r.modulation.tag().to_le_bytes());
            out.extend_from_slice(&r.target_snr_db.to_le_bytes());
            out.extend_from_slice(&r.achieved_snr_db.to_le_bytes());
            for s in [&r.clean, &r.corrupted] {
                planar.clear();
                s.write_planar(&mut planar);
                for v in &planar {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
    }
    out
}

fn decode_record(bytes: &[u8]) -> std::result::Result<Record, String> {
    let word = |k: usize| u32::from_le_bytes(bytes[4 * k..4 * k + 4].try_into().unwrap());
    let tag = word(0);
    let modulation = Modulation::from_tag(tag).ok_or_else(|| format!("unknown modulation tag {tag}"))?;
    let signal = |first: usize| {
        let vals: Vec<f32> = (first..first + 2 * SEGMENT_LEN).map(|k| f32::from_bits(word(k))).collect();
        ComplexSignal::from_planar(&vals).map_err(|e| e.to_string())
    };
    Ok(Record {
        modulation,
        target_snr_db: f32::from_bits(word(1)),
        achieved_snr_db: f32::from_bits(word(2)),
        clean: signal(3)?,
        corrupted: signal(3 + 2 * SEGMENT_LEN)?,
    })
}

pub fn manifest_for(
    splits: &DatasetSplits,
    records_sha256: String,
    master_seed: u64,
    generator: Option<crate::config::DatasetSection>,
    provenance: Option<Provenance>,
) -> DatasetManifest {
    let mut first = 0;
    let entries = Split::ALL
        .iter()
        .map(|&s| {
            let e = SplitEntry { name: s.name().into(), first, count: splits.get(s).len() };
            first += e.count;
            e
        })
        .collect();
    DatasetManifest {
        format_version: DATASET_FORMAT_VERSION,
        record_bytes: RECORD_BYTES,
        total: first,
        splits: entries,
        master_seed,
        generator,
        choices: generator_choices(),
        records_sha256,
        provenance,
    }
}

/// Writes `records.bin` and `manifest.json` into `dir`.
pub fn write_dataset(
    dir: &Path,
    splits: &DatasetSplits,
    master_seed: u64,
    generator: Option<crate::config::DatasetSection>,
    provenance: Option<Provenance>,
) -> Result<DatasetManifest> {
    fs::create_dir_all(dir).map_err(Error::io(dir))?;
    let bytes = encode(splits);
    let manifest = manifest_for(splits, sha256_hex(&bytes), master_seed, generator, provenance);
    atomic_write(&dir.join(RECORDS_FILE), &bytes)?;
    write_json(&dir.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<DatasetManifest> {
    let path = dir.join(MANIFEST_FILE);
    let m: DatasetManifest = read_json(&path)?;
    if m.format_version != DATASET_FORMAT_VERSION {
        return Err(Error::Version { path, found: m.format_version, expected: DATASET_FORMAT_VERSION });
    }
    if m.record_bytes != RECORD_BYTES {
        return Err(Error::Data(format!("{}: record size {} is not {RECORD_BYTES}", path.display(), m.record_bytes)));
    }
    Ok(m)
}

/// Reads a dataset directory, checking its digest and every record.
pub fn read_dataset(dir: &Path) -> Result<(DatasetSplits, DatasetManifest)> {
    let manifest = read_manifest(dir)?;
    let path: PathBuf = dir.join(RECORDS_FILE);
    let bytes = fs::read(&path).map_err(Error::io(&path))?;
    let integrity = |detail: String| Error::Integrity { path: path.clone(), detail };
    if bytes.len() != manifest.total * RECORD_BYTES {
        return Err(integrity(format!(
            "file holds {} bytes, manifest declares {} records of {RECORD_BYTES} bytes",
            bytes.len(),
            manifest.total
        )));
    }
    let digest = sha256_hex(&bytes);
    if digest != manifest.records_sha256 {
        return Err(integrity(format!("sha256 {digest} does not match manifest {}", manifest.records_sha256)));
    }
    let mut out = DatasetSplits::default();
    for entry in &manifest.splits {
        let split = crate::config::parse_split(&entry.name).map_err(|_| integrity(format!("unknown split {}", entry.name)))?;
        if entry.first + entry.count > manifest.total {
            return Err(integrity(format!("split {} runs past the last record", entry.name)));
        }
        let records = (entry.first..entry.first + entry.count)
            .into_par_iter()
            .map(|i| {
                decode_record(&bytes[i * RECORD_BYTES..(i + 1) * RECORD_BYTES])
                    .map_err(|e| integrity(format!("record {i} at byte {}: {e}", i * RECORD_BYTES)))
            })
            .collect::<Result<Vec<_>>>()?;
        out.get_mut(split).records = records;
    }
    Ok((out, manifest))
}

/// Reads a single split of a dataset directory.
pub fn read_split(dir: &Path, split: Split) -> Result<(Dataset, DatasetManifest)> {
    let (mut splits, m) = read_dataset(dir)?;
    Ok((std::mem::take(splits.get_mut(split)), m))
}
