//! Checkpoint files.
//!
//! ```text
//! 0   magic   b"CORENETK"
//! 8   u32     format version
//! 12  u64     header length H
//! 20  H bytes JSON header (configs, metadata, tensor table)
//! 20+H        parameter blob, little-endian f32
//! ```
//!
//! Each table entry names a tensor, its shape, its byte range in the blob,
//! and its sha256, so a damaged file reports which bytes went bad.

use std::path::Path;

use corenet_core::autodiff::Tensor;
use corenet_core::models::{ArConfig, Checkpoint, MrConfig, ParamStore, Shared};
use corenet_core::optim::{AdamConfig, AdamState};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsutil::{atomic_write, sha256_hex};

pub const MAGIC: &[u8; 8] = b"CORENETK";
pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;
const PREAMBLE: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SharedJson {
    pub q_order: usize,
    pub kernel_size: usize,
    pub dropout_rate: f32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArConfigJson {
    pub encoder_widths: Vec<usize>,
    pub input_channels: usize,
    pub output_channels: usize,
    pub segment_len: usize,
    pub shared: SharedJson,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MrConfigJson {
    pub widths: Vec<usize>,
    pub input_channels: usize,
    pub segment_len: usize,
    pub shared: SharedJson,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamJson {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step_count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: u64,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub format_version: u32,
    pub crate_version: String,
    pub pass_index: usize,
    pub epoch: usize,
    pub val_snr_db: f64,
    pub master_seed: u64,
    pub ar_config: ArConfigJson,
    pub mr_config: MrConfigJson,
    pub ar_optimizer: AdamJson,
    pub mr_optimizer: AdamJson,
    pub param_counts: [usize; 2],
    pub blob_bytes: u64,
    pub blob_sha256: String,
    pub tensors: Vec<TensorEntry>,
}

/// Store groups in blob order, with their table prefixes.
fn groups(c: &Checkpoint) -> [(&'static str, &ParamStore); 6] {
    [
        ("ar", &c.ar_params),
        ("mr", &c.mr_params),
        ("ar.adam.m", &c.ar_optimizer.first_moment),
        ("ar.adam.v", &c.ar_optimizer.second_moment),
        ("mr.adam.m", &c.mr_optimizer.first_moment),
        ("mr.adam.v", &c.mr_optimizer.second_moment),
    ]
}

fn shared_json(s: &Shared) -> SharedJson {
    SharedJson { q_order: s.q_order, kernel_size: s.kernel_size, dropout_rate: s.dropout_rate }
}

fn shared_of(s: &SharedJson) -> Shared {
    Shared { q_order: s.q_order, kernel_size: s.kernel_size, dropout_rate: s.dropout_rate }
}

pub fn ar_json(c: &ArConfig) -> ArConfigJson {
    ArConfigJson {
        encoder_widths: c.encoder_widths.clone(),
        input_channels: c.input_channels,
        output_channels: c.output_channels,
        segment_len: c.segment_len,
        shared: shared_json(&c.shared),
    }
}

pub fn ar_of(c: &ArConfigJson) -> ArConfig {
    ArConfig {
        encoder_widths: c.encoder_widths.clone(),
        input_channels: c.input_channels,
        output_channels: c.output_channels,
        segment_len: c.segment_len,
        shared: shared_of(&c.shared),
    }
}

pub fn mr_json(c: &MrConfig) -> MrConfigJson {
    MrConfigJson {
        widths: c.widths.clone(),
        input_channels: c.input_channels,
        segment_len: c.segment_len,
        shared: shared_json(&c.shared),
    }
}

pub fn mr_of(c: &MrConfigJson) -> MrConfig {
    MrConfig {
        widths: c.widths.clone(),
        input_channels: c.input_channels,
        segment_len: c.segment_len,
        shared: shared_of(&c.shared),
    }
}

fn adam_json(s: &AdamState) -> AdamJson {
    AdamJson { beta1: s.config.beta1, beta2: s.config.beta2, eps: s.config.eps, step_count: s.step_count }
}

/// Serializes a checkpoint to bytes.
pub fn encode(ckpt: &Checkpoint) -> Result<Vec<u8>> {
    if !ckpt.val_snr_db.is_finite() {
        return Err(Error::Data(format!("refusing to save non-finite val SNR {}", ckpt.val_snr_db)));
    }
    let mut blob = Vec::new();
    let mut tensors = Vec::new();
    for (prefix, store) in groups(ckpt) {
        for (name, t) in store.iter() {
            let start = blob.len();
            for v in t.data() {
                blob.extend_from_slice(&v.to_le_bytes());
            }
            tensors.push(TensorEntry {
                name: format!("{prefix}/{name}"),
                shape: t.shape().to_vec(),
                offset: start as u64,
                bytes: (blob.len() - start) as u64,
                sha256: sha256_hex(&blob[start..]),
            });
        }
    }
    let header = Header {
        format_version: CHECKPOINT_FORMAT_VERSION,
        crate_version: env!("CARGO_PKG_VERSION").into(),
        pass_index: ckpt.pass_index,
        epoch: ckpt.epoch,
        val_snr_db: ckpt.val_snr_db,
        master_seed: ckpt.master_seed,
        ar_config: ar_json(&ckpt.ar_config),
        mr_config: mr_json(&ckpt.mr_config),
        ar_optimizer: adam_json(&ckpt.ar_optimizer),
        mr_optimizer: adam_json(&ckpt.mr_optimizer),
        param_counts: [ckpt.ar_params.param_count(), ckpt.mr_params.param_count()],
        blob_bytes: blob.len() as u64,
        blob_sha256: sha256_hex(&blob),
        tensors,
    };
    let json = serde_json::to_vec(&header).map_err(|e| Error::Data(e.to_string()))?;
    let mut out = Vec::with_capacity(PREAMBLE + json.len() + blob.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CHECKPOINT_FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&blob);
    Ok(out)
}

/// Parses checkpoint bytes. `path` only labels errors.
pub fn decode(bytes: &[u8], path: &Path) -> Result<(Checkpoint, Header)> {
    let bad = |detail: String| Error::Integrity { path: path.to_path_buf(), detail };
    if bytes.len() < PREAMBLE {
        return Err(bad(format!("file is {} bytes, shorter than the {PREAMBLE}-byte preamble", bytes.len())));
    }
    if &bytes[..8] != MAGIC {
        return Err(bad("bad magic at byte 0".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != CHECKPOINT_FORMAT_VERSION {
        return Err(Error::Version { path: path.to_path_buf(), found: version, expected: CHECKPOINT_FORMAT_VERSION });
    }
    let header_len = u64::from_le_bytes(bytes[12..20].try_into().unwrap());
    let blob_start = (PREAMBLE as u64).checked_add(header_len).filter(|&e| e <= bytes.len() as u64).ok_or_else(|| {
        bad(format!("header length {header_len} at byte 12 runs past the end of a {}-byte file", bytes.len()))
    })? as usize;
    let header: Header = serde_json::from_slice(&bytes[PREAMBLE..blob_start]).map_err(|e| {
        // The header is written on one line, so the column is the offset.
        let at = if e.line() == 1 { PREAMBLE + e.column().saturating_sub(1) } else { PREAMBLE };
        bad(format!("header JSON invalid near byte {at}: {e}"))
    })?;
    if header.format_version != version {
        return Err(bad(format!("header version {} disagrees with preamble version {version}", header.format_version)));
    }
    let blob = &bytes[blob_start..];
    if blob.len() as u64 != header.blob_bytes {
        return Err(bad(format!(
            "parameter blob at byte {blob_start} is {} bytes, header declares {}",
            blob.len(),
            header.blob_bytes
        )));
    }

    let mut stores: [ParamStore; 6] = Default::default();
    let prefixes = ["ar", "mr", "ar.adam.m", "ar.adam.v", "mr.adam.m", "mr.adam.v"];
    let mut expected_offset = 0u64;
    for e in &header.tensors {
        let (start, end) = (e.offset, e.offset.saturating_add(e.bytes));
        let (abs_start, abs_end) = (blob_start as u64 + start, blob_start as u64 + end);
        if start != expected_offset || end > header.blob_bytes {
            return Err(bad(format!("tensor {} claims bytes [{abs_start}, {abs_end}) out of sequence", e.name)));
        }
        expected_offset = end;
        let data = &blob[start as usize..end as usize];
        if sha256_hex(data) != e.sha256 {
            return Err(bad(format!("tensor {} at bytes [{abs_start}, {abs_end}) fails its sha256", e.name)));
        }
        if e.bytes % 4 != 0 {
            return Err(bad(format!("tensor {} at byte {abs_start} has a partial value", e.name)));
        }
        let values: Vec<f32> = data.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(bad(format!("tensor {} holds a non-finite value at byte {}", e.name, abs_start + 4 * k as u64)));
        }
        let tensor = Tensor::new(&e.shape, values).map_err(|err| bad(format!("tensor {}: {err}", e.name)))?;
        let (prefix, name) = e.name.split_once('/').ok_or_else(|| bad(format!("tensor name {} has no group", e.name)))?;
        let g = prefixes.iter().position(|p| *p == prefix).ok_or_else(|| bad(format!("unknown group {prefix}")))?;
        stores[g].insert(name.to_string(), tensor).map_err(|err| bad(err.to_string()))?;
    }
    if expected_offset != header.blob_bytes {
        return Err(bad(format!("tensor table covers {expected_offset} of {} blob bytes", header.blob_bytes)));
    }
    let digest = sha256_hex(blob);
    if digest != header.blob_sha256 {
        return Err(bad(format!("blob sha256 {digest} does not match header")));
    }

    let [ar, mr, arm, arv, mrm, mrv] = stores;
    let adam = |j: &AdamJson, m, v| AdamState {
        config: AdamConfig { beta1: j.beta1, beta2: j.beta2, eps: j.eps },
        first_moment: m,
        second_moment: v,
        step_count: j.step_count,
    };
    let ckpt = Checkpoint {
        ar_config: ar_of(&header.ar_config),
        mr_config: mr_of(&header.mr_config),
        ar_params: ar,
        mr_params: mr,
        ar_optimizer: adam(&header.ar_optimizer, arm, arv),
        mr_optimizer: adam(&header.mr_optimizer, mrm, mrv),
        pass_index: header.pass_index,
        epoch: header.epoch,
        val_snr_db: header.val_snr_db,
        master_seed: header.master_seed,
    };
    ckpt.validate().map_err(|e| bad(e.to_string()))?;
    Ok((ckpt, header))
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    atomic_write(path, &encode(ckpt)?)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    Ok(load_with_header(path)?.0)
}

pub fn load_with_header(path: &Path) -> Result<(Checkpoint, Header)> {
    let bytes = std::fs::read(path).map_err(Error::io(path))?;
    decode(&bytes, path)
}
