use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use corenet_core::dataset::{Dataset, DatasetSplits, Record, Split};
use corenet_core::eval::{self, EvalReport};
use corenet_core::metrics::snr_db;
use corenet_core::models::{ArConfig, Checkpoint, ParamStore};
use corenet_core::ptl::{restore_chain, run_ptl, PassOutcome, PtlPlan};
use corenet_core::training::{baseline_snr, train_corenet, Networks, PassResult};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::checkpoint::load_checkpoint;
use crate::cli::{Cli, Command, ConfigArgs};
use crate::config::{parse_split, Resolved, RunConfig};
use crate::datafile::{self, DatasetManifest, Provenance};
use crate::error::{Error, Result};
use crate::fsutil::{sha256_file, sha256_hex, write_json};
use crate::ptl_dir::{read_chain, ChainManifest, PtlWriter};
use crate::report;
use crate::run::{RunSummary, RunWriter, CONFIG_FILE};

pub const INPUTS_FILE: &str = "inputs.json";
pub const EVAL_FILE: &str = "eval.json";

/// Which dataset a run trained on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputRecord {
    pub dataset: Option<PathBuf>,
    pub records_sha256: String,
}

fn resolve(args: &ConfigArgs) -> Result<Resolved> {
    RunConfig::with_overrides(args.config.as_deref(), args.seed, args.toy_scale)?.resolve()
}

fn snapshot(dir: &Path, r: &Resolved) -> Result<()> {
    fs::create_dir_all(dir).map_err(Error::io(dir))?;
    write_json(&dir.join(CONFIG_FILE), &r.snapshot)
}

/// Loads `data`, or synthesizes `splits` from the config.
fn inputs(r: &Resolved, data: Option<&Path>, splits: &[Split]) -> Result<(DatasetSplits, InputRecord)> {
    match data {
        Some(dir) => {
            let (d, m) = datafile::read_dataset(dir)?;
            Ok((d, InputRecord { dataset: Some(dir.to_path_buf()), records_sha256: m.records_sha256 }))
        }
        None => {
            let d = datafile::synthesize(&r.dataset, splits)?;
            let sha = sha256_hex(&datafile::encode(&d));
            Ok((d, InputRecord { dataset: None, records_sha256: sha }))
        }
    }
}

#[derive(Debug)]
pub struct SynthOutcome {
    pub manifest: DatasetManifest,
}

pub fn synth(args: &ConfigArgs) -> Result<SynthOutcome> {
    let r = resolve(args)?;
    let splits = datafile::synthesize(&r.dataset, &r.splits)?;
    let manifest = datafile::write_dataset(&args.out, &splits, r.seed, Some(r.snapshot.dataset.clone()), None)?;
    snapshot(&args.out, &r)?;
    Ok(SynthOutcome { manifest })
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub result: PassResult,
    pub summary: RunSummary,
}

pub fn train(args: &ConfigArgs, data: Option<&Path>) -> Result<TrainOutcome> {
    let r = resolve(args)?;
    let (d, input) = inputs(&r, data, &[Split::Train, Split::Val])?;
    if d.train.is_empty() || d.val.is_empty() {
        return Err(Error::Data("training needs non-empty train and val splits".into()));
    }
    snapshot(&args.out, &r)?;
    write_json(&args.out.join(INPUTS_FILE), &input)?;
    let nets = Networks::init(r.ar.clone(), r.mr.clone(), r.seed)?;
    let mut writer = RunWriter::create(&args.out)?;
    let result = train_corenet(&d.train, &d.val, &r.train, nets, 0, &mut writer)?;
    let summary = writer.finish(&result, baseline_snr(&d.val))?;
    Ok(TrainOutcome { result, summary })
}

#[derive(Debug)]
pub struct PtlOutcome {
    pub passes: Vec<PassOutcome>,
    pub chain: ChainManifest,
    pub summaries: Vec<RunSummary>,
}

pub fn ptl(args: &ConfigArgs, data: Option<&Path>, passes: Option<usize>, write_datasets: bool) -> Result<PtlOutcome> {
    let r = resolve(args)?;
    let num_passes = passes.unwrap_or(r.passes);
    if num_passes == 0 {
        return Err(Error::Config("at least one pass is required".into()));
    }
    let (d, input) = inputs(&r, data, &r.splits)?;
    if d.train.is_empty() || d.val.is_empty() {
        return Err(Error::Data("transfer needs non-empty train and val splits".into()));
    }
    let mut snap = r.clone();
    snap.snapshot.ptl.passes = Some(num_passes);
    snapshot(&args.out, &snap)?;
    write_json(&args.out.join(INPUTS_FILE), &input)?;
    let nets = Networks::init(r.ar.clone(), r.mr.clone(), r.seed)?;
    let mut writer = PtlWriter::create(&args.out, &d, write_datasets)?;
    let outcomes = run_ptl(&PtlPlan::new(num_passes, r.train.clone()), &d, nets, &mut writer)?;
    Ok(PtlOutcome { passes: outcomes, chain: writer.chain().clone(), summaries: std::mem::take(&mut writer.summaries) })
}

/// Apprentice stages of a restore, with the checkpoint digests.
#[derive(Debug)]
pub struct Stages {
    pub stages: Vec<(ArConfig, ParamStore)>,
    pub sha256: Vec<String>,
}

impl Stages {
    pub fn param_count(&self) -> usize {
        self.stages.iter().map(|(_, p)| p.param_count()).sum()
    }
}

pub fn load_stages(checkpoints: &[PathBuf], chain: Option<&Path>) -> Result<Stages> {
    let mut paths = Vec::new();
    let mut expected = Vec::new();
    if let Some(chain_path) = chain {
        let c = read_chain(chain_path)?;
        let root = chain_path.parent().unwrap_or(Path::new("."));
        for link in &c.passes {
            paths.push(root.join(&link.best_checkpoint));
            expected.push(Some(link.best_checkpoint_sha256.clone()));
        }
    } else {
        paths.extend(checkpoints.iter().cloned());
        expected.resize(paths.len(), None);
    }
    if paths.is_empty() {
        return Err(Error::Config("restore needs --checkpoint or --chain".into()));
    }
    let mut out = Stages { stages: Vec::new(), sha256: Vec::new() };
    for (p, want) in paths.iter().zip(expected) {
        let sha = sha256_file(p)?;
        if want.is_some_and(|w| w != sha) {
            return Err(Error::Integrity { path: p.clone(), detail: "checkpoint digest differs from the chain".into() });
        }
        let ckpt: Checkpoint = load_checkpoint(p)?;
        out.stages.push((ckpt.ar_config, ckpt.ar_params));
        out.sha256.push(sha);
    }
    Ok(out)
}

/// Runs every record through the stages in fixed-size chunks. Chunks are
/// independent, so the output does not depend on the thread count.
pub fn restore_records(stages: &[(ArConfig, ParamStore)], data: &Dataset, batch_size: usize) -> Result<Dataset> {
    let chunks: Vec<Vec<Record>> = data
        .records
        .par_chunks(batch_size.max(1))
        .map(|chunk| {
            let inputs: Vec<_> = chunk.iter().map(|r| r.corrupted.clone()).collect();
            let out = restore_chain(stages, &inputs)?;
            Ok(chunk.iter().zip(out).map(|(r, s)| Record { corrupted: s, ..r.clone() }).collect())
        })
        .collect::<corenet_core::Result<_>>()?;
    Ok(Dataset { records: chunks.into_iter().flatten().collect() })
}

#[derive(Debug)]
pub struct RestoreOutcome {
    pub manifest: DatasetManifest,
    pub signals: usize,
    pub seconds: f64,
    pub param_count: usize,
}

impl RestoreOutcome {
    pub fn signals_per_second(&self) -> f64 {
        self.signals as f64 / self.seconds.max(1e-9)
    }
}

pub fn restore(checkpoints: &[PathBuf], chain: Option<&Path>, data: &Path, out: &Path, batch_size: usize) -> Result<RestoreOutcome> {
    let stages = load_stages(checkpoints, chain)?;
    let (input, manifest) = datafile::read_dataset(data)?;
    let start = Instant::now();
    let mut restored = DatasetSplits::default();
    for split in Split::ALL {
        *restored.get_mut(split) = restore_records(&stages.stages, input.get(split), batch_size)?;
    }
    let seconds = start.elapsed().as_secs_f64();
    let signals = Split::ALL.iter().map(|&s| input.get(s).len()).sum();
    let provenance = Provenance { source_records_sha256: manifest.records_sha256.clone(), checkpoints_sha256: stages.sha256.clone() };
    let manifest = datafile::write_dataset(out, &restored, manifest.master_seed, manifest.generator, Some(provenance))?;
    Ok(RestoreOutcome { manifest, signals, seconds, param_count: stages.param_count() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub table_schema: u32,
    pub split: String,
    pub reference_records_sha256: String,
    pub restored_records_sha256: Option<String>,
    pub overall: report::OverallRow,
}

/// Scores `candidates` (or the reference's own corrupted signals) and
/// aggregates the report.
pub fn evaluate(reference: &Dataset, candidates: Option<&Dataset>, pass: Option<usize>) -> Result<EvalReport> {
    let scores = match candidates {
        None => eval::score_corrupted(reference),
        Some(c) => {
            if c.len() != reference.len() {
                return Err(Error::Data(format!("{} restored records for {} reference records", c.len(), reference.len())));
            }
            if let Some(i) = reference.records.iter().zip(&c.records).position(|(a, b)| {
                a.clean != b.clean || a.modulation != b.modulation || a.target_snr_db.to_bits() != b.target_snr_db.to_bits()
            }) {
                return Err(Error::Data(format!("record {i} of the restored set does not match the reference")));
            }
            reference.records.par_iter().zip(&c.records).map(|(r, h)| eval::score(r, snr_db(&r.clean, &h.corrupted))).collect()
        }
    };
    Ok(eval::report(&scores, pass))
}

pub fn eval_cmd(reference: &Path, restored: Option<&Path>, split: &str, pass: Option<usize>, out: &Path) -> Result<EvalReport> {
    let split = parse_split(split)?;
    let (ref_data, ref_m) = datafile::read_split(reference, split)?;
    let restored_data = restored.map(|p| datafile::read_split(p, split)).transpose()?;
    if ref_data.is_empty() {
        return Err(Error::Data(format!("split {} of {} is empty", split.name(), reference.display())));
    }
    let rep = evaluate(&ref_data, restored_data.as_ref().map(|(d, _)| d), pass)?;
    report::write_report(out, &rep)?;
    let record = EvalRecord {
        table_schema: report::TABLE_SCHEMA,
        split: split.name().into(),
        reference_records_sha256: ref_m.records_sha256,
        restored_records_sha256: restored_data.map(|(_, m)| m.records_sha256),
        overall: report::overall_row(&rep),
    };
    write_json(&out.join(EVAL_FILE), &record)?;
    Ok(rep)
}

pub fn plot(input: &Path, out: &Path) -> Result<()> {
    let svg = report::plot_csv(input)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(Error::io(dir))?;
    }
    crate::fsutil::atomic_write(out, svg.as_bytes())
}

/// Executes a parsed command line, printing a short report.
pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(args) => {
            let o = synth(&args)?;
            let counts: Vec<String> = o.manifest.splits.iter().map(|s| format!("{} {}", s.name, s.count)).collect();
            println!("wrote {} records ({}) to {}", o.manifest.total, counts.join(", "), args.out.display());
            println!("records sha256 {}", o.manifest.records_sha256);
        }
        Command::Train { cfg, data } => {
            let o = train(&cfg, data.as_deref())?;
            let s = &o.summary;
            println!("best epoch {} of {}: val SNR {:.3} dB (corrupted {:.3} dB)", s.best_epoch, s.epochs, s.best_val_snr_db, s.baseline_val_snr_db);
            println!("AR {} parameters, MR {} parameters; run in {}", s.ar_params, s.mr_params, cfg.out.display());
        }
        Command::Ptl { cfg, data, passes, no_datasets } => {
            let o = ptl(&cfg, data.as_deref(), passes, !no_datasets)?;
            for p in &o.passes {
                let fmt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.3}"));
                println!(
                    "pass {}: best val SNR {:.3} dB at epoch {}; restored train/val/test {} / {} / {} dB",
                    p.result.pass_index,
                    p.result.best.val_snr_db,
                    p.result.best.epoch,
                    fmt(p.restored_snr.train),
                    fmt(p.restored_snr.val),
                    fmt(p.restored_snr.test)
                );
            }
        }
        Command::Restore { checkpoint, chain, data, out, batch_size } => {
            let o = restore(&checkpoint, chain.as_deref(), &data, &out, batch_size)?;
            println!(
                "restored {} signals in {:.3} s ({:.1} signals/s, {:.3} ms/signal); AR parameters {}",
                o.signals,
                o.seconds,
                o.signals_per_second(),
                1e3 / o.signals_per_second(),
                o.param_count
            );
        }
        Command::Eval { reference, restored, split, pass, out } => {
            let rep = eval_cmd(&reference, restored.as_deref(), &split, pass, &out)?;
            println!(
                "{} records: mean SNR {:.3} dB, corrupted {:.3} dB, improvement {:.3} dB",
                rep.count,
                rep.overall_mean_snr_db,
                rep.corrupted_baseline_db,
                rep.overall_mean_snr_db - rep.corrupted_baseline_db
            );
        }
        Command::Plot { input, out } => plot(&input, &out)?,
    }
    Ok(())
}
