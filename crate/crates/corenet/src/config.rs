//! JSON run configuration. Every field is optional; missing fields take the
//! library defaults, and [`RunConfig::resolve`] returns the filled-in
//! snapshot that a run records next to its outputs.

use std::path::Path;

use corenet_core::corruption::ArtifactSet;
use corenet_core::dataset::{DatasetConfig, Split};
use corenet_core::losses::LossWeights;
use corenet_core::models::{ArConfig, MrConfig, Shared};
use corenet_core::optim::AdamConfig;
use corenet_core::spectrogram::SpectrogramConfig;
use corenet_core::training::TrainConfig;
use corenet_core::waveform::Modulation;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    /// Dataset size relative to the full benchmark.
    pub toy_scale: Option<f64>,
    pub dataset: DatasetSection,
    pub model: ModelSection,
    pub train: TrainSection,
    pub ptl: PtlSection,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    pub train_count: Option<usize>,
    pub val_count: Option<usize>,
    pub test_per_cell: Option<usize>,
    pub train_snr_range: Option<[f64; 2]>,
    pub test_snr_levels: Option<Vec<f64>>,
    /// Artifact subsets such as `"AWGN"` or `"ECHO+INTERFERENCE"`.
    pub subsets: Option<Vec<String>>,
    pub modulations: Option<Vec<String>>,
    /// Splits `synth` emits.
    pub splits: Option<Vec<String>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub ar_widths: Option<Vec<usize>>,
    pub mr_widths: Option<Vec<usize>>,
    pub q_order: Option<usize>,
    pub kernel_size: Option<usize>,
    pub dropout: Option<f32>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub max_epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub lr_ar: Option<f64>,
    pub lr_mr: Option<f64>,
    pub t_max: Option<u64>,
    pub epsilon: Option<f64>,
    pub beta: Option<f64>,
    pub phi: Option<f64>,
    pub psnr_target_db: Option<f64>,
    pub stft_window: Option<usize>,
    pub stft_hop: Option<usize>,
    pub adam_beta1: Option<f64>,
    pub adam_beta2: Option<f64>,
    pub adam_eps: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PtlSection {
    pub passes: Option<usize>,
}

/// Library-level configs built from a [`RunConfig`].
#[derive(Debug, Clone, PartialEq)]
pub struct Resolved {
    pub seed: u64,
    pub dataset: DatasetConfig,
    pub splits: Vec<Split>,
    pub ar: ArConfig,
    pub mr: MrConfig,
    pub train: TrainConfig,
    pub passes: usize,
    /// The input with every field filled in.
    pub snapshot: RunConfig,
}

pub const DEFAULT_PASSES: usize = 4;

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(Error::io(path))?;
        Self::from_json(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Loads `path` if given, then applies the command-line overrides.
    pub fn with_overrides(path: Option<&Path>, seed: Option<u64>, toy_scale: Option<f64>) -> Result<Self> {
        let mut cfg = match path {
            Some(p) => Self::load(p)?,
            None => Self::default(),
        };
        if seed.is_some() {
            cfg.seed = seed;
        }
        if toy_scale.is_some() {
            cfg.toy_scale = toy_scale;
        }
        Ok(cfg)
    }

    pub fn resolve(&self) -> Result<Resolved> {
        let seed = self.seed.unwrap_or(0);
        let scale = self.toy_scale.unwrap_or(1.0);
        if !(scale.is_finite() && scale > 0.0 && scale <= 1.0) {
            return Err(Error::Config(format!("toy_scale must be in (0, 1], got {scale}")));
        }

        let d = &self.dataset;
        let mut dataset = DatasetConfig::scaled(scale, seed);
        if let Some(n) = d.train_count {
            dataset.train_count = n;
        }
        if let Some(n) = d.val_count {
            dataset.val_count = n;
        }
        if let Some(n) = d.test_per_cell {
            dataset.test_per_cell = n;
        }
        if let Some([lo, hi]) = d.train_snr_range {
            dataset.train_snr_range = (lo, hi);
        }
        if let Some(levels) = &d.test_snr_levels {
            dataset.test_snr_levels = levels.clone();
        }
        if let Some(names) = &d.subsets {
            dataset.subsets = names.iter().map(|n| parse_subset(n)).collect::<Result<_>>()?;
        }
        if let Some(names) = &d.modulations {
            dataset.modulations = names
                .iter()
                .map(|n| Modulation::from_name(n).ok_or_else(|| Error::Config(format!("unknown modulation {n:?}"))))
                .collect::<Result<_>>()?;
        }
        dataset.validate().map_err(config_err)?;
        let splits = match &d.splits {
            Some(names) => names.iter().map(|n| parse_split(n)).collect::<Result<Vec<_>>>()?,
            None => Split::ALL.to_vec(),
        };

        let m = &self.model;
        let base = Shared::default();
        let shared = Shared {
            q_order: m.q_order.unwrap_or(base.q_order),
            kernel_size: m.kernel_size.unwrap_or(base.kernel_size),
            dropout_rate: m.dropout.unwrap_or(base.dropout_rate),
        };
        let mut ar = m.ar_widths.clone().map(ArConfig::with_widths).unwrap_or_default();
        ar.shared = shared;
        let mut mr = m.mr_widths.clone().map(MrConfig::with_widths).unwrap_or_default();
        mr.shared = shared;
        ar.validate().map_err(config_err)?;
        mr.validate().map_err(config_err)?;

        let t = &self.train;
        let def = TrainConfig::default();
        let (lw, sp, ad) = (LossWeights::default(), SpectrogramConfig::default(), AdamConfig::default());
        let train = TrainConfig {
            max_epochs: t.max_epochs.unwrap_or(def.max_epochs),
            batch_size: t.batch_size.unwrap_or(def.batch_size),
            lr_ar: t.lr_ar.unwrap_or(def.lr_ar),
            lr_mr: t.lr_mr.unwrap_or(def.lr_mr),
            t_max: t.t_max.unwrap_or(def.t_max),
            loss_weights: LossWeights {
                epsilon: t.epsilon.unwrap_or(lw.epsilon),
                beta: t.beta.unwrap_or(lw.beta),
                phi: t.phi.unwrap_or(lw.phi),
                psnr_target_db: t.psnr_target_db.unwrap_or(lw.psnr_target_db),
            },
            spectrogram: SpectrogramConfig {
                window_length: t.stft_window.unwrap_or(sp.window_length),
                hop: t.stft_hop.unwrap_or(sp.hop),
            },
            adam: AdamConfig {
                beta1: t.adam_beta1.unwrap_or(ad.beta1),
                beta2: t.adam_beta2.unwrap_or(ad.beta2),
                eps: t.adam_eps.unwrap_or(ad.eps),
            },
            seed,
        };
        train.validate(train.batch_size).map_err(config_err)?;

        let passes = self.ptl.passes.unwrap_or(DEFAULT_PASSES);
        if passes == 0 {
            return Err(Error::Config("ptl.passes must be at least 1".into()));
        }

        let snapshot = RunConfig {
            seed: Some(seed),
            toy_scale: Some(scale),
            dataset: DatasetSection {
                train_count: Some(dataset.train_count),
                val_count: Some(dataset.val_count),
                test_per_cell: Some(dataset.test_per_cell),
                train_snr_range: Some([dataset.train_snr_range.0, dataset.train_snr_range.1]),
                test_snr_levels: Some(dataset.test_snr_levels.clone()),
                subsets: Some(dataset.subsets.iter().map(|s| s.label()).collect()),
                modulations: Some(dataset.modulations.iter().map(|m| m.name().to_string()).collect()),
                splits: Some(splits.iter().map(|s| s.name().to_string()).collect()),
            },
            model: ModelSection {
                ar_widths: Some(ar.encoder_widths.clone()),
                mr_widths: Some(mr.widths.clone()),
                q_order: Some(shared.q_order),
                kernel_size: Some(shared.kernel_size),
                dropout: Some(shared.dropout_rate),
            },
            train: TrainSection {
                max_epochs: Some(train.max_epochs),
                batch_size: Some(train.batch_size),
                lr_ar: Some(train.lr_ar),
                lr_mr: Some(train.lr_mr),
                t_max: Some(train.t_max),
                epsilon: Some(train.loss_weights.epsilon),
                beta: Some(train.loss_weights.beta),
                phi: Some(train.loss_weights.phi),
                psnr_target_db: Some(train.loss_weights.psnr_target_db),
                stft_window: Some(train.spectrogram.window_length),
                stft_hop: Some(train.spectrogram.hop),
                adam_beta1: Some(train.adam.beta1),
                adam_beta2: Some(train.adam.beta2),
                adam_eps: Some(train.adam.eps),
            },
            ptl: PtlSection { passes: Some(passes) },
        };
        Ok(Resolved { seed, dataset, splits, ar, mr, train, passes, snapshot })
    }
}

fn config_err(e: corenet_core::Error) -> Error {
    Error::Config(e.to_string())
}

pub fn parse_subset(name: &str) -> Result<ArtifactSet> {
    let mut set: Option<ArtifactSet> = None;
    for part in name.split('+') {
        let a = match part.trim().to_ascii_uppercase().as_str() {
            "AWGN" => ArtifactSet::AWGN,
            "ECHO" => ArtifactSet::ECHO,
            "INTERFERENCE" => ArtifactSet::INTERFERENCE,
            _ => return Err(Error::Config(format!("unknown artifact {part:?} in {name:?}"))),
        };
        set = Some(set.map_or(a, |s| s.union(a)));
    }
    set.ok_or_else(|| Error::Config("empty artifact subset".into()))
}

pub fn parse_split(name: &str) -> Result<Split> {
    Split::ALL
        .into_iter()
        .find(|s| s.name().eq_ignore_ascii_case(name))
        .ok_or_else(|| Error::Config(format!("unknown split {name:?}")))
}
