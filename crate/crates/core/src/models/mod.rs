//! Apprentice (AR) and master (MR) regressors built from residual
//! generative-neuron blocks.
//!
//! Every block has the same parameter group, in this order:
//! `conv.w [Q, Cout, Cin, K]`, `conv.b`, `norm.gamma`, `norm.beta`,
//! `skip.w [1, Cout, Cin, 1]`, `skip.b`. The last AR stage has no norm.

mod forward;
mod params;

pub use forward::{ar_forward, mr_forward, BoundParams, Mode};
pub use params::{xavier_bound, ParamStore};

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::rng;
use crate::SEGMENT_LEN;

pub const AR_STAGES: usize = 5;
pub const MR_STAGES: usize = 6;
pub const NORM_EPS: f32 = 1e-5;

/// One residual down- or up-sampling block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockConfig {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_size: usize,
    pub stride: usize,
    pub q_order: usize,
    pub dropout_rate: f32,
}

impl BlockConfig {
    pub fn new(in_channels: usize, out_channels: usize, shared: &Shared) -> Self {
        Self {
            in_channels,
            out_channels,
            kernel_size: shared.kernel_size,
            stride: 2,
            q_order: shared.q_order,
            dropout_rate: shared.dropout_rate,
        }
    }

    /// Scalar parameters in the block; `norm` adds the affine pair.
    pub fn param_count(&self, norm: bool) -> usize {
        let (ci, co) = (self.in_channels, self.out_channels);
        let main = self.q_order * co * ci * self.kernel_size + co;
        let skip = co * ci + co;
        main + skip + if norm { 2 * co } else { 0 }
    }
}

/// Hyperparameters shared by every block of a network.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Shared {
    pub q_order: usize,
    pub kernel_size: usize,
    pub dropout_rate: f32,
}

impl Default for Shared {
    fn default() -> Self {
        Self { q_order: 3, kernel_size: 3, dropout_rate: 0.25 }
    }
}

impl Shared {
    fn validate(&self) -> Result<()> {
        if self.q_order == 0 || self.kernel_size == 0 || self.kernel_size.is_multiple_of(2) {
            return Err(Error::Parameter(format!("q_order must be positive and kernel odd, got {self:?}")));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Parameter(format!("dropout rate {} outside [0, 1)", self.dropout_rate)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArConfig {
    pub encoder_widths: Vec<usize>,
    pub input_channels: usize,
    pub output_channels: usize,
    pub segment_len: usize,
    pub shared: Shared,
}

impl Default for ArConfig {
    fn default() -> Self {
        Self::with_widths(vec![16, 32, 48, 64, 80])
    }
}

impl ArConfig {
    pub fn with_widths(encoder_widths: Vec<usize>) -> Self {
        Self {
            encoder_widths,
            input_channels: 2,
            output_channels: 2,
            segment_len: SEGMENT_LEN,
            shared: Shared::default(),
        }
    }

    pub fn uniform(width: usize) -> Self {
        Self::with_widths(vec![width; AR_STAGES])
    }

    pub fn validate(&self) -> Result<()> {
        self.shared.validate()?;
        if self.encoder_widths.len() != AR_STAGES || self.encoder_widths.contains(&0) {
            return Err(Error::Parameter(format!(
                "AR needs {AR_STAGES} positive encoder widths, got {:?}",
                self.encoder_widths
            )));
        }
        if self.input_channels == 0 || self.output_channels == 0 {
            return Err(Error::Parameter(String::from("AR channel counts must be positive")));
        }
        check_len(self.segment_len, AR_STAGES)
    }

    /// Encoder blocks, then the decoder blocks; the last decoder block is
    /// the output stage.
    pub fn blocks(&self) -> Vec<BlockConfig> {
        let w = &self.encoder_widths;
        let mut out = Vec::with_capacity(2 * AR_STAGES);
        let mut c = self.input_channels;
        for &width in w {
            out.push(BlockConfig::new(c, width, &self.shared));
            c = width;
        }
        for j in (0..AR_STAGES - 1).rev() {
            out.push(BlockConfig::new(c, w[j], &self.shared));
            c = 2 * w[j];
        }
        out.push(BlockConfig::new(c, self.output_channels, &self.shared));
        out
    }

    /// Closed-form scalar parameter count.
    pub fn param_count(&self) -> usize {
        let blocks = self.blocks();
        let last = blocks.len() - 1;
        blocks.iter().enumerate().map(|(i, b)| b.param_count(i != last)).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MrConfig {
    pub widths: Vec<usize>,
    pub input_channels: usize,
    pub segment_len: usize,
    pub shared: Shared,
}

impl Default for MrConfig {
    fn default() -> Self {
        Self::with_widths(vec![12, 24, 32, 48, 56, 64])
    }
}

impl MrConfig {
    pub fn with_widths(widths: Vec<usize>) -> Self {
        Self { widths, input_channels: 4, segment_len: SEGMENT_LEN, shared: Shared::default() }
    }

    pub fn uniform(width: usize) -> Self {
        Self::with_widths(vec![width; MR_STAGES])
    }

    pub fn validate(&self) -> Result<()> {
        self.shared.validate()?;
        if self.widths.len() != MR_STAGES || self.widths.contains(&0) {
            return Err(Error::Parameter(format!("MR needs {MR_STAGES} positive widths, got {:?}", self.widths)));
        }
        if self.input_channels == 0 || !self.input_channels.is_multiple_of(2) {
            return Err(Error::Parameter(format!(
                "MR input channels must be a positive even count, got {}",
                self.input_channels
            )));
        }
        check_len(self.segment_len, MR_STAGES)
    }

    pub fn blocks(&self) -> Vec<BlockConfig> {
        let mut c = self.input_channels;
        self.widths
            .iter()
            .map(|&w| {
                let b = BlockConfig::new(c, w, &self.shared);
                c = w;
                b
            })
            .collect()
    }

    pub fn param_count(&self) -> usize {
        let head = self.widths[MR_STAGES - 1] + 1;
        self.blocks().iter().map(|b| b.param_count(true)).sum::<usize>() + head
    }
}

fn check_len(len: usize, stages: usize) -> Result<()> {
    let unit = 1usize << stages;
    if len == 0 || !len.is_multiple_of(unit) || len / unit < 2 {
        return Err(Error::Parameter(format!(
            "segment length {len} must be a multiple of {unit} and at least {}",
            2 * unit
        )));
    }
    Ok(())
}

fn block_layout(prefix: &str, b: &BlockConfig, norm: bool) -> Vec<(String, Vec<usize>)> {
    let (q, ci, co, k) = (b.q_order, b.in_channels, b.out_channels, b.kernel_size);
    let mut out = vec![
        (format!("{prefix}.conv.w"), vec![q, co, ci, k]),
        (format!("{prefix}.conv.b"), vec![co]),
    ];
    if norm {
        out.push((format!("{prefix}.norm.gamma"), vec![co]));
        out.push((format!("{prefix}.norm.beta"), vec![co]));
    }
    out.push((format!("{prefix}.skip.w"), vec![1, co, ci, 1]));
    out.push((format!("{prefix}.skip.b"), vec![co]));
    out
}

/// Names and shapes of every AR parameter, in binding order.
pub fn ar_layout(cfg: &ArConfig) -> Vec<(String, Vec<usize>)> {
    let blocks = cfg.blocks();
    let mut out = Vec::new();
    for (i, b) in blocks.iter().enumerate() {
        let (prefix, norm) = if i < AR_STAGES {
            (format!("enc{i}"), true)
        } else if i + 1 < blocks.len() {
            (format!("dec{}", i - AR_STAGES), true)
        } else {
            (String::from("out"), false)
        };
        out.extend(block_layout(&prefix, b, norm));
    }
    out
}

/// Names and shapes of every MR parameter, in binding order.
pub fn mr_layout(cfg: &MrConfig) -> Vec<(String, Vec<usize>)> {
    let mut out = Vec::new();
    for (i, b) in cfg.blocks().iter().enumerate() {
        out.extend(block_layout(&format!("down{i}"), b, true));
    }
    let feat = cfg.widths[MR_STAGES - 1];
    out.push((String::from("head.w"), vec![1, feat]));
    out.push((String::from("head.b"), vec![1]));
    out
}

/// Xavier-uniform weights (per q-slice fans), zero biases, unit gains.
pub fn init_xavier(layout: &[(String, Vec<usize>)], seed: u64) -> Result<ParamStore> {
    let mut store = ParamStore::default();
    for (idx, (name, shape)) in layout.iter().enumerate() {
        let tensor = params::init_tensor(name, shape, rng::derive(seed, &[idx as u64]))?;
        store.insert(name.clone(), tensor)?;
    }
    Ok(store)
}

pub fn init_ar(cfg: &ArConfig, master_seed: u64) -> Result<ParamStore> {
    cfg.validate()?;
    init_xavier(&ar_layout(cfg), rng::derive(master_seed, &[rng::stream::INIT_AR]))
}

pub fn init_mr(cfg: &MrConfig, master_seed: u64) -> Result<ParamStore> {
    cfg.validate()?;
    init_xavier(&mr_layout(cfg), rng::derive(master_seed, &[rng::stream::INIT_MR]))
}

/// Everything needed to resume or re-evaluate a pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub ar_config: ArConfig,
    pub mr_config: MrConfig,
    pub ar_params: ParamStore,
    pub mr_params: ParamStore,
    pub ar_optimizer: crate::optim::AdamState,
    pub mr_optimizer: crate::optim::AdamState,
    pub pass_index: usize,
    pub epoch: usize,
    pub val_snr_db: f64,
    pub master_seed: u64,
}

impl Checkpoint {
    /// Fails unless both parameter stores match their configs.
    pub fn validate(&self) -> Result<()> {
        self.ar_config.validate()?;
        self.mr_config.validate()?;
        self.ar_params.check_layout(&ar_layout(&self.ar_config))?;
        self.mr_params.check_layout(&mr_layout(&self.mr_config))?;
        self.ar_optimizer.first_moment.check_layout(&ar_layout(&self.ar_config))?;
        self.ar_optimizer.second_moment.check_layout(&ar_layout(&self.ar_config))?;
        self.mr_optimizer.first_moment.check_layout(&mr_layout(&self.mr_config))?;
        self.mr_optimizer.second_moment.check_layout(&mr_layout(&self.mr_config))
    }
}
