//! Training run directories.
//!
//! ```text
//! config.json   resolved configuration
//! epochs.csv    one row per epoch, starting with the untrained epoch 0
//! best.ckpt     best validation SNR so far
//! last.ckpt     state after the latest epoch
//! run.json      summary, written when the pass completes
//! ```
//!
//! Checkpoints are replaced atomically after every epoch, so a run that
//! dies part way leaves a loadable `last.ckpt`.

use std::fs::{self, File};
use std::path::{Path, PathBuf};

use corenet_core::models::Checkpoint;
use corenet_core::training::{EpochLog, PassResult, TrainObserver};
use serde::{Deserialize, Serialize};

use crate::checkpoint::save_checkpoint;
use crate::error::{Error, Result};

pub const EPOCHS_FILE: &str = "epochs.csv";
pub const BEST_FILE: &str = "best.ckpt";
pub const LAST_FILE: &str = "last.ckpt";
pub const CONFIG_FILE: &str = "config.json";
pub const RUN_FILE: &str = "run.json";
pub const EPOCHS_SCHEMA: u32 = 1;

/// A row of `epochs.csv`. Loss columns are empty for epoch 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRow {
    pub epoch: usize,
    #[serde(rename = "L_A")]
    pub l_a: Option<f64>,
    #[serde(rename = "L_fid")]
    pub l_fid: Option<f64>,
    #[serde(rename = "L_time")]
    pub l_time: Option<f64>,
    #[serde(rename = "L_freq")]
    pub l_freq: Option<f64>,
    #[serde(rename = "L_M")]
    pub l_m: Option<f64>,
    pub val_snr: f64,
    pub mr_mse: f64,
}

impl From<&EpochLog> for EpochRow {
    fn from(log: &EpochLog) -> Self {
        let l = log.losses;
        EpochRow {
            epoch: log.epoch,
            l_a: l.map(|l| l.apprentice),
            l_fid: l.map(|l| l.fidelity),
            l_time: l.map(|l| l.time),
            l_freq: l.map(|l| l.freq),
            l_m: l.map(|l| l.master),
            val_snr: log.val_snr_db,
            mr_mse: log.mr_val_mse,
        }
    }
}

/// Summary of a finished pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub epochs_schema: u32,
    pub pass_index: usize,
    pub epochs: usize,
    pub best_epoch: usize,
    pub best_val_snr_db: f64,
    pub baseline_val_snr_db: f64,
    pub ar_params: usize,
    pub mr_params: usize,
    pub master_seed: u64,
    pub best_sha256: String,
    pub last_sha256: String,
    /// Training choices the configuration does not spell out.
    pub choices: Vec<String>,
}

pub fn training_choices() -> Vec<String> {
    [
        "cosine learning rate stepped per iteration, restarting every t_max iterations",
        "spectrogram is the magnitude of one complex STFT of I + jQ",
        "one apprentice forward per batch; its detached output feeds the master step",
        "epoch 0 (untrained) validation takes part in best tracking",
    ]
    .map(String::from)
    .to_vec()
}

/// Writes the epoch log and checkpoints of one pass as it trains.
pub struct RunWriter {
    dir: PathBuf,
    csv: csv::Writer<File>,
}

impl RunWriter {
    pub fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(Error::io(dir))?;
        let path = dir.join(EPOCHS_FILE);
        let file = File::create(&path).map_err(Error::io(&path))?;
        Ok(Self { dir: dir.to_path_buf(), csv: csv::Writer::from_writer(file) })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn write_epoch(&mut self, log: &EpochLog, last: &Checkpoint, is_best: bool) -> Result<()> {
        let path = self.dir.join(EPOCHS_FILE);
        self.csv.serialize(EpochRow::from(log)).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        self.csv.flush().map_err(Error::io(&path))?;
        save_checkpoint(last, &self.dir.join(LAST_FILE))?;
        if is_best {
            save_checkpoint(last, &self.dir.join(BEST_FILE))?;
        }
        Ok(())
    }

    /// Writes `run.json` for a completed pass.
    pub fn finish(&self, result: &PassResult, baseline_val_snr_db: f64) -> Result<RunSummary> {
        let summary = RunSummary {
            epochs_schema: EPOCHS_SCHEMA,
            pass_index: result.pass_index,
            epochs: result.last.epoch,
            best_epoch: result.best.epoch,
            best_val_snr_db: result.best.val_snr_db,
            baseline_val_snr_db,
            ar_params: result.best.ar_params.param_count(),
            mr_params: result.best.mr_params.param_count(),
            master_seed: result.best.master_seed,
            best_sha256: crate::fsutil::sha256_file(&self.dir.join(BEST_FILE))?,
            last_sha256: crate::fsutil::sha256_file(&self.dir.join(LAST_FILE))?,
            choices: training_choices(),
        };
        crate::fsutil::write_json(&self.dir.join(RUN_FILE), &summary)?;
        Ok(summary)
    }
}

impl TrainObserver for RunWriter {
    fn on_epoch(&mut self, log: &EpochLog, last: &Checkpoint, is_best: bool) -> corenet_core::Result<()> {
        self.write_epoch(log, last, is_best).map_err(|e| corenet_core::Error::Integrity(e.to_string()))
    }
}

pub fn read_epochs(path: &Path) -> Result<Vec<EpochRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    r.deserialize().collect::<std::result::Result<_, _>>().map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}
