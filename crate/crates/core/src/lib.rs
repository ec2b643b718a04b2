//! Cooperative regressor networks for blind restoration of radar signals.
//!
//! The crate is `no_std` (it needs `alloc`) and has no IO. It covers the
//! whole numerical pipeline:
//!
//! - [`waveform`] synthesizes clean LPI radar segments across twelve
//!   modulation families.
//! - [`corruption`] and [`dataset`] blend noise, echo, and interference into
//!   paired segments at an exact target SNR.
//! - [`autodiff`] is a small reverse-mode tape with generative-neuron
//!   (Self-ONN) convolutions.
//! - [`models`] assembles the apprentice (restoring) and master (quality
//!   regressing) networks.
//! - [`losses`], [`metrics`], and [`spectrogram`] provide every scalar the
//!   cooperative loop consumes.
//! - [`training`], [`ptl`], and [`eval`] run one cooperative pass, chain
//!   passes with progressive transfer, and aggregate restoration reports.
//!
//! File formats, checkpoints on disk, and the command line live in the
//! companion `corenet` crate.

#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod autodiff;
pub mod corruption;
pub mod dataset;
mod error;
pub mod eval;
pub mod losses;
pub mod metrics;
pub mod models;
pub mod optim;
pub mod ptl;
pub mod rng;
pub mod signal;
pub mod spectrogram;
pub mod training;
pub mod waveform;

pub use error::{Error, NonFiniteSnapshot, Result};
pub use signal::{ComplexSignal, SEGMENT_LEN};
