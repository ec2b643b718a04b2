//! Magnitude STFT of the complex sequence `i + j·q`.
//!
//! Frames start at sample 0 and advance by `hop`; a tail shorter than one
//! window is dropped. The DFT length equals the window length, so a frame
//! yields `window_length` bins.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::autodiff::kernels::{gemm, Mat};
use crate::error::{Error, Result};
use crate::signal::{ComplexSignal, SEGMENT_LEN};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpectrogramConfig {
    pub window_length: usize,
    pub hop: usize,
}

impl Default for SpectrogramConfig {
    /// Hann 64 / hop 16: 61 frames × 64 bins on a 1024-sample segment.
    fn default() -> Self {
        Self { window_length: 64, hop: 16 }
    }
}

impl SpectrogramConfig {
    pub fn validate(&self, len: usize) -> Result<()> {
        if self.window_length == 0 || self.window_length > len || self.hop == 0 || self.hop > self.window_length {
            return Err(Error::Parameter(alloc::format!(
                "invalid spectrogram config {self:?} for length {len}"
            )));
        }
        Ok(())
    }

    pub fn frames(&self, len: usize) -> usize {
        (len - self.window_length) / self.hop + 1
    }

    pub fn bins(&self) -> usize {
        self.window_length
    }
}

/// Periodic Hann window.
pub fn hann(len: usize) -> Vec<f32> {
    (0..len)
        .map(|n| (0.5 - 0.5 * libm::cos(2.0 * PI * n as f64 / len as f64)) as f32)
        .collect()
}

/// Precomputed window and DFT tables for one configuration.
#[derive(Debug, Clone)]
pub(crate) struct StftPlan {
    pub cfg: SpectrogramConfig,
    pub len: usize,
    window: Vec<f32>,
    /// `cos(2πkm/W)` and `sin(2πkm/W)`, both symmetric `[W, W]`.
    cos: Vec<f32>,
    sin: Vec<f32>,
}

/// Saved real/imag parts of one batched STFT, each `[batch, frames, bins]`.
#[derive(Debug, Clone)]
pub(crate) struct StftParts {
    pub re: Vec<f32>,
    pub im: Vec<f32>,
}

impl StftPlan {
    pub fn new(cfg: SpectrogramConfig, len: usize) -> Result<Self> {
        cfg.validate(len)?;
        let w = cfg.window_length;
        let mut cos = vec![0.0; w * w];
        let mut sin = vec![0.0; w * w];
        for k in 0..w {
            for m in 0..w {
                // Reduce k·m mod W first so the table is exactly symmetric.
                let theta = 2.0 * PI * ((k * m) % w) as f64 / w as f64;
                cos[k * w + m] = libm::cos(theta) as f32;
                sin[k * w + m] = libm::sin(theta) as f32;
            }
        }
        Ok(Self { cfg, len, window: hann(w), cos, sin })
    }

    pub fn frames(&self) -> usize {
        self.cfg.frames(self.len)
    }

    fn windowed(&self, x: &[f32]) -> Vec<f32> {
        let (w, hop, f) = (self.cfg.window_length, self.cfg.hop, self.frames());
        let mut out = vec![0.0; f * w];
        for fr in 0..f {
            for m in 0..w {
                out[fr * w + m] = self.window[m] * x[fr * hop + m];
            }
        }
        out
    }

    /// `x` is `[batch, 2, len]`; returns magnitudes `[batch, frames, bins]`
    /// and the complex parts.
    pub fn forward(&self, x: &[f32], batch: usize) -> (Vec<f32>, StftParts) {
        let (w, f, len) = (self.cfg.window_length, self.frames(), self.len);
        let per = f * w;
        let mut re = vec![0.0; batch * per];
        let mut im = vec![0.0; batch * per];
        for b in 0..batch {
            let a = self.windowed(&x[(2 * b) * len..(2 * b + 1) * len]);
            let c = self.windowed(&x[(2 * b + 1) * len..(2 * b + 2) * len]);
            let (rb, ib) = (&mut re[b * per..(b + 1) * per], &mut im[b * per..(b + 1) * per]);
            // re = A·C + B·S, im = B·C - A·S
            gemm(f, w, w, Mat::rows(&a, w), Mat::rows(&self.cos, w), 0.0, rb);
            gemm(f, w, w, Mat::rows(&c, w), Mat::rows(&self.sin, w), 1.0, rb);
            let mut tmp = vec![0.0; per];
            gemm(f, w, w, Mat::rows(&a, w), Mat::rows(&self.sin, w), 0.0, &mut tmp);
            gemm(f, w, w, Mat::rows(&c, w), Mat::rows(&self.cos, w), 0.0, ib);
            for (v, t) in ib.iter_mut().zip(&tmp) {
                *v -= t;
            }
        }
        let mag = re.iter().zip(&im).map(|(&r, &i)| libm::sqrtf(r * r + i * i)).collect();
        (mag, StftParts { re, im })
    }

    /// Accumulates `dL/dx` given `dL/d|X|`. The magnitude's gradient is
    /// taken as zero where `|X| = 0`.
    pub fn backward(&self, parts: &StftParts, mag: &[f32], gmag: &[f32], batch: usize, dx: &mut [f32]) {
        let (w, f, len, hop) = (self.cfg.window_length, self.frames(), self.len, self.cfg.hop);
        let per = f * w;
        let mut gre = vec![0.0; per];
        let mut gim = vec![0.0; per];
        let mut da = vec![0.0; per];
        let mut dc = vec![0.0; per];
        for b in 0..batch {
            for t in 0..per {
                let idx = b * per + t;
                let m = mag[idx];
                if m > 0.0 {
                    gre[t] = gmag[idx] * parts.re[idx] / m;
                    gim[t] = gmag[idx] * parts.im[idx] / m;
                } else {
                    gre[t] = 0.0;
                    gim[t] = 0.0;
                }
            }
            // dA = gre·C - gim·S, dB = gre·S + gim·C
            let mut tmp = vec![0.0; per];
            gemm(f, w, w, Mat::rows(&gre, w), Mat::rows(&self.cos, w), 0.0, &mut da);
            gemm(f, w, w, Mat::rows(&gim, w), Mat::rows(&self.sin, w), 0.0, &mut tmp);
            for (v, t) in da.iter_mut().zip(&tmp) {
                *v -= t;
            }
            gemm(f, w, w, Mat::rows(&gre, w), Mat::rows(&self.sin, w), 0.0, &mut dc);
            gemm(f, w, w, Mat::rows(&gim, w), Mat::rows(&self.cos, w), 1.0, &mut dc);
            let (di, dq) = dx[2 * b * len..(2 * b + 2) * len].split_at_mut(len);
            for fr in 0..f {
                for m in 0..w {
                    di[fr * hop + m] += self.window[m] * da[fr * w + m];
                    dq[fr * hop + m] += self.window[m] * dc[fr * w + m];
                }
            }
        }
    }
}

/// Magnitude grid of a signal, `grid[frame][bin]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub frames: usize,
    pub bins: usize,
    pub magnitude: Vec<f32>,
}

impl Spectrogram {
    pub fn at(&self, frame: usize, bin: usize) -> f32 {
        self.magnitude[frame * self.bins + bin]
    }
}

pub fn spectrogram(x: &ComplexSignal, cfg: &SpectrogramConfig) -> Result<Spectrogram> {
    let plan = StftPlan::new(*cfg, SEGMENT_LEN)?;
    let mut planar = Vec::with_capacity(2 * SEGMENT_LEN);
    x.write_planar(&mut planar);
    let (magnitude, _) = plan.forward(&planar, 1);
    Ok(Spectrogram { frames: plan.frames(), bins: cfg.bins(), magnitude })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grid_shape() {
        let s = spectrogram(&ComplexSignal::zeros(), &SpectrogramConfig::default()).unwrap();
        assert_eq!((s.frames, s.bins), (61, 64));
        assert!(s.magnitude.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rejects_bad_config() {
        let cfg = SpectrogramConfig { window_length: 64, hop: 65 };
        assert!(spectrogram(&ComplexSignal::zeros(), &cfg).is_err());
        let cfg = SpectrogramConfig { window_length: 2048, hop: 16 };
        assert!(spectrogram(&ComplexSignal::zeros(), &cfg).is_err());
    }
}
