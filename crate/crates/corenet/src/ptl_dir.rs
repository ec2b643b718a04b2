//! Transfer run directories.
//!
//! ```text
//! config.json
//! chain.json          links every pass's input, checkpoint, and output
//! summary.csv         mean SNR per split after each pass
//! pass_<k>/           a run directory, plus restored/ (the pass output)
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use corenet_core::dataset::DatasetSplits;
use corenet_core::models::{Checkpoint, ParamStore};
use corenet_core::ptl::{PassOutcome, PtlObserver};
use corenet_core::training::{EpochLog, Phase, TrainObserver};
use serde::{Deserialize, Serialize};

use crate::datafile::{self, Provenance};
use crate::error::{Error, Result};
use crate::fsutil::{atomic_write, read_json, sha256_file, write_json};
use crate::run::{RunSummary, RunWriter, BEST_FILE};

pub const CHAIN_FILE: &str = "chain.json";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const CHAIN_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainLink {
    pub pass: usize,
    pub input_records_sha256: String,
    /// Relative to the chain file.
    pub best_checkpoint: String,
    pub best_checkpoint_sha256: String,
    pub best_epoch: usize,
    pub best_val_snr_db: f64,
    pub output_dataset: Option<String>,
    pub output_records_sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainManifest {
    pub format_version: u32,
    pub base_records_sha256: String,
    pub renormalization: String,
    pub passes: Vec<ChainLink>,
}

impl ChainManifest {
    /// Checks that each pass consumes exactly what the previous one produced.
    pub fn check_links(&self) -> Result<()> {
        let mut expect = &self.base_records_sha256;
        for (k, link) in self.passes.iter().enumerate() {
            if link.pass != k || &link.input_records_sha256 != expect {
                return Err(Error::Data(format!("chain link {k} does not consume the previous output")));
            }
            expect = &link.output_records_sha256;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub pass: usize,
    pub train_snr: Option<f64>,
    pub val_snr: Option<f64>,
    pub test_snr: Option<f64>,
    pub input_train_snr: Option<f64>,
    pub input_val_snr: Option<f64>,
    pub input_test_snr: Option<f64>,
    pub best_epoch: usize,
    pub best_val_snr: f64,
}

pub fn pass_dir(root: &Path, k: usize) -> PathBuf {
    root.join(format!("pass_{k}"))
}

/// Observer that lays out a transfer run as it goes.
pub struct PtlWriter {
    root: PathBuf,
    write_datasets: bool,
    current: Option<(usize, RunWriter)>,
    chain: ChainManifest,
    rows: Vec<SummaryRow>,
    pub summaries: Vec<RunSummary>,
}

impl PtlWriter {
    pub fn create(root: &Path, base: &DatasetSplits, write_datasets: bool) -> Result<Self> {
        fs::create_dir_all(root).map_err(Error::io(root))?;
        let chain = ChainManifest {
            format_version: CHAIN_FORMAT_VERSION,
            base_records_sha256: crate::fsutil::sha256_hex(&datafile::encode(base)),
            renormalization: "per-channel min-max to [-1, 1] between passes".into(),
            passes: Vec::new(),
        };
        Ok(Self { root: root.to_path_buf(), write_datasets, current: None, chain, rows: Vec::new(), summaries: Vec::new() })
    }

    pub fn chain(&self) -> &ChainManifest {
        &self.chain
    }

    fn writer_for(&mut self, k: usize) -> Result<&mut RunWriter> {
        if self.current.as_ref().map(|(p, _)| *p) != Some(k) {
            self.current = Some((k, RunWriter::create(&pass_dir(&self.root, k))?));
        }
        Ok(&mut self.current.as_mut().unwrap().1)
    }

    fn end_pass(&mut self, outcome: &PassOutcome, restored: &DatasetSplits) -> Result<()> {
        let k = outcome.result.pass_index;
        let dir = pass_dir(&self.root, k);
        let baseline = outcome.input_snr.val.unwrap_or(f64::NAN);
        let summary = self.writer_for(k)?.finish(&outcome.result, baseline)?;
        self.summaries.push(summary);

        let input = self.chain.passes.last().map_or(self.chain.base_records_sha256.clone(), |l| l.output_records_sha256.clone());
        let best_sha = sha256_file(&dir.join(BEST_FILE))?;
        let (output_dataset, output_sha) = if self.write_datasets {
            let provenance = Provenance { source_records_sha256: input.clone(), checkpoints_sha256: vec![best_sha.clone()] };
            let seed = outcome.result.best.master_seed;
            let m = datafile::write_dataset(&dir.join("restored"), restored, seed, None, Some(provenance))?;
            (Some(format!("pass_{k}/restored")), m.records_sha256)
        } else {
            (None, crate::fsutil::sha256_hex(&datafile::encode(restored)))
        };
        self.chain.passes.push(ChainLink {
            pass: k,
            input_records_sha256: input,
            best_checkpoint: format!("pass_{k}/{BEST_FILE}"),
            best_checkpoint_sha256: best_sha,
            best_epoch: outcome.result.best.epoch,
            best_val_snr_db: outcome.result.best.val_snr_db,
            output_dataset,
            output_records_sha256: output_sha,
        });
        write_json(&self.root.join(CHAIN_FILE), &self.chain)?;

        let (i, o) = (outcome.input_snr, outcome.restored_snr);
        self.rows.push(SummaryRow {
            pass: k,
            train_snr: o.train,
            val_snr: o.val,
            test_snr: o.test,
            input_train_snr: i.train,
            input_val_snr: i.val,
            input_test_snr: i.test,
            best_epoch: outcome.result.best.epoch,
            best_val_snr: outcome.result.best.val_snr_db,
        });
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in &self.rows {
            w.serialize(row).map_err(|e| Error::Data(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Data(e.to_string()))?;
        atomic_write(&self.root.join(SUMMARY_FILE), &bytes)
    }
}

fn core_err(e: Error) -> corenet_core::Error {
    match e {
        Error::Core(c) => c,
        other => corenet_core::Error::Integrity(other.to_string()),
    }
}

impl TrainObserver for PtlWriter {
    fn on_step(&mut self, _phase: Phase, _epoch: usize, _batch: usize, _ar: &ParamStore, _mr: &ParamStore) {}

    fn on_epoch(&mut self, log: &EpochLog, last: &Checkpoint, is_best: bool) -> corenet_core::Result<()> {
        self.writer_for(last.pass_index).map_err(core_err)?.on_epoch(log, last, is_best)
    }
}

impl PtlObserver for PtlWriter {
    fn on_pass_end(&mut self, outcome: &PassOutcome, restored: &DatasetSplits) -> corenet_core::Result<()> {
        self.end_pass(outcome, restored).map_err(core_err)
    }
}

pub fn read_chain(path: &Path) -> Result<ChainManifest> {
    let chain: ChainManifest = read_json(path)?;
    if chain.format_version != CHAIN_FORMAT_VERSION {
        return Err(Error::Version { path: path.into(), found: chain.format_version, expected: CHAIN_FORMAT_VERSION });
    }
    chain.check_links()?;
    Ok(chain)
}

pub fn read_summary(path: &Path) -> Result<Vec<SummaryRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    r.deserialize().collect::<std::result::Result<_, _>>().map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}
