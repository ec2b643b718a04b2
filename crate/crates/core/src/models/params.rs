use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng as _;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::rng;

/// Named parameter tensors in a fixed order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore {
    entries: Vec<(String, Tensor)>,
}

impl ParamStore {
    pub fn insert(&mut self, name: String, tensor: Tensor) -> Result<()> {
        if self.get(&name).is_some() {
            return Err(Error::Parameter(format!("duplicate parameter {name}")));
        }
        self.entries.push((name, tensor));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.entries.iter_mut().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn tensors(&self) -> impl Iterator<Item = &Tensor> {
        self.entries.iter().map(|(_, t)| t)
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.entries.iter_mut().map(|(_, t)| t)
    }

    /// Number of scalar parameters, by enumeration.
    pub fn param_count(&self) -> usize {
        self.tensors().map(Tensor::numel).sum()
    }

    /// A store of the same names and shapes, filled with zeros.
    pub fn zeros_like(&self) -> Self {
        let entries = self.entries.iter().map(|(n, t)| (n.clone(), Tensor::zeros(t.shape()))).collect();
        Self { entries }
    }

    /// Fails unless `layout` lists exactly these names and shapes, in order.
    pub fn check_layout(&self, layout: &[(String, Vec<usize>)]) -> Result<()> {
        if layout.len() != self.entries.len() {
            return Err(Error::Integrity(format!(
                "expected {} parameter tensors, found {}",
                layout.len(),
                self.entries.len()
            )));
        }
        for ((name, shape), (n, t)) in layout.iter().zip(&self.entries) {
            if name != n || shape.as_slice() != t.shape() {
                return Err(Error::Integrity(format!(
                    "parameter {n} {:?} does not match expected {name} {shape:?}",
                    t.shape()
                )));
            }
        }
        Ok(())
    }

    /// Order-sensitive FNV-1a hash of every bit of every value.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for t in self.tensors() {
            for v in t.data() {
                for byte in v.to_bits().to_le_bytes() {
                    h ^= u64::from(byte);
                    h = h.wrapping_mul(0x0100_0000_01b3);
                }
            }
        }
        h
    }
}

/// Uniform bound `sqrt(6 / (fan_in + fan_out))`.
pub fn xavier_bound(fan_in: usize, fan_out: usize) -> f32 {
    libm::sqrt(6.0 / (fan_in + fan_out) as f64) as f32
}

pub(crate) fn init_tensor(name: &str, shape: &[usize], seed: u64) -> Result<Tensor> {
    let bound = match (name.rsplit('.').next(), shape) {
        (Some("w"), [_, co, ci, k]) => Some(xavier_bound(ci * k, co * k)),
        (Some("w"), [out, feat]) => Some(xavier_bound(*feat, *out)),
        (Some("w"), s) => return Err(Error::Parameter(format!("no initializer for weight {name} {s:?}"))),
        _ => None,
    };
    let mut t = Tensor::zeros(shape);
    match bound {
        Some(a) => {
            let mut r = rng::rng_from(seed);
            for v in t.data_mut() {
                *v = r.random_range(-a..=a);
            }
        }
        None if name.ends_with(".gamma") => t.data_mut().fill(1.0),
        None => {}
    }
    Ok(t)
}
