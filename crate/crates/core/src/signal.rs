use alloc::vec;
use alloc::vec::Vec;

use crate::error::{dim_err, Result};

/// Fixed segment length of every radar signal handled by the crate.
pub const SEGMENT_LEN: usize = 1024;

/// A two-channel (I/Q) sampled radar segment of [`SEGMENT_LEN`] samples.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSignal {
    i: Vec<f32>,
    q: Vec<f32>,
}

impl ComplexSignal {
    pub fn new(i: Vec<f32>, q: Vec<f32>) -> Result<Self> {
        if i.len() != SEGMENT_LEN || q.len() != SEGMENT_LEN {
            return Err(dim_err!(
                "signal channels must hold {SEGMENT_LEN} samples, got {} and {}",
                i.len(),
                q.len()
            ));
        }
        if i.iter().chain(q.iter()).any(|v| !v.is_finite()) {
            return Err(crate::Error::Parameter("signal contains NaN or Inf".into()));
        }
        Ok(Self { i, q })
    }

    pub fn zeros() -> Self {
        Self { i: vec![0.0; SEGMENT_LEN], q: vec![0.0; SEGMENT_LEN] }
    }

    /// Builds a signal from a channel-major `[2, SEGMENT_LEN]` slice.
    pub fn from_planar(data: &[f32]) -> Result<Self> {
        if data.len() != 2 * SEGMENT_LEN {
            return Err(dim_err!("planar signal must hold {} values, got {}", 2 * SEGMENT_LEN, data.len()));
        }
        Self::new(data[..SEGMENT_LEN].to_vec(), data[SEGMENT_LEN..].to_vec())
    }

    pub fn i(&self) -> &[f32] {
        &self.i
    }

    pub fn q(&self) -> &[f32] {
        &self.q
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        match c {
            0 => &self.i,
            1 => &self.q,
            _ => panic!("channel index {c} out of range"),
        }
    }

    pub fn len(&self) -> usize {
        SEGMENT_LEN
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Appends the channel-major layout (I block then Q block) to `out`.
    pub fn write_planar(&self, out: &mut Vec<f32>) {
        out.extend_from_slice(&self.i);
        out.extend_from_slice(&self.q);
    }

    /// Total power Σ(i² + q²), accumulated in f64.
    pub fn power(&self) -> f64 {
        self.i.iter().chain(self.q.iter()).map(|&v| (v as f64) * (v as f64)).sum()
    }

    /// Largest sample value over both channels.
    pub fn max_value(&self) -> f32 {
        self.i.iter().chain(self.q.iter()).copied().fold(f32::NEG_INFINITY, f32::max)
    }

    pub(crate) fn from_parts_unchecked(i: Vec<f32>, q: Vec<f32>) -> Self {
        debug_assert_eq!(i.len(), SEGMENT_LEN);
        debug_assert_eq!(q.len(), SEGMENT_LEN);
        Self { i, q }
    }
}

/// Result of [`normalize_segment`].
#[derive(Debug, Clone, PartialEq)]
pub struct Normalized {
    pub signal: ComplexSignal,
    /// Per channel (I, Q): `true` when the channel was constant and mapped to zeros.
    pub degenerate: [bool; 2],
}

/// Min-max maps each channel independently onto [-1, 1].
///
/// A non-constant channel hits -1 and +1 exactly at its extremal samples. A
/// constant channel becomes all zeros and is flagged.
pub fn normalize_segment(x: &ComplexSignal) -> Normalized {
    let (i, di) = normalize_channel(&x.i);
    let (q, dq) = normalize_channel(&x.q);
    Normalized { signal: ComplexSignal { i, q }, degenerate: [di, dq] }
}

pub fn normalize_channel(x: &[f32]) -> (Vec<f32>, bool) {
    let (lo, hi) = x
        .iter()
        .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if !(hi > lo) {
        return (vec![0.0; x.len()], true);
    }
    // The affine map is the identity here; skipping it avoids the rounding
    // of (x + 1) for tiny x.
    if lo == -1.0 && hi == 1.0 {
        return (x.to_vec(), false);
    }
    let range = hi - lo;
    let out = x.iter().map(|&v| 2.0 * ((v - lo) / range) - 1.0).collect();
    (out, false)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn channel_map_endpoints() {
        let (y, flag) = normalize_channel(&[0.0, 2.0, 4.0]);
        assert_eq!(y, [-1.0, 0.0, 1.0]);
        assert!(!flag);
    }

    #[test]
    fn unit_span_channel_is_fixed_point() {
        let x = [-1.0, 0.25, 1e-9, 1.0, -0.5];
        let (y, _) = normalize_channel(&x);
        assert_eq!(y, x);
    }

    #[test]
    fn constant_channel_is_flagged() {
        let (y, flag) = normalize_channel(&[5.0, 5.0, 5.0]);
        assert_eq!(y, [0.0, 0.0, 0.0]);
        assert!(flag);
    }

    #[test]
    fn rejects_wrong_length() {
        assert!(matches!(
            ComplexSignal::new(vec![0.0; 10], vec![0.0; 10]),
            Err(crate::Error::Dimension(_))
        ));
    }

    #[test]
    fn segment_normalization_flags_per_channel() {
        let i: Vec<f32> = (0..SEGMENT_LEN).map(|n| n as f32).collect();
        let x = ComplexSignal::new(i, vec![3.0; SEGMENT_LEN]).unwrap();
        let n = normalize_segment(&x);
        assert_eq!(n.degenerate, [false, true]);
        assert_eq!(n.signal.i()[0], -1.0);
        assert_eq!(n.signal.i()[SEGMENT_LEN - 1], 1.0);
        assert!(n.signal.q().iter().all(|&v| v == 0.0));
    }
}
