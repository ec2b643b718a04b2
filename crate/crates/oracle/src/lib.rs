//! Naive f64 reference implementations used by tests.
//!
//! Every function here is a direct loop over its defining formula, with no
//! lowering, batching tricks, or shared kernels, so that it can be checked
//! against the optimized f32 code and differenced numerically.

use std::f64::consts::PI;

pub const MSE_FLOOR: f64 = 1e-12;

/// `[batch, channels, len]` array.
#[derive(Debug, Clone, PartialEq)]
pub struct Arr {
    pub batch: usize,
    pub channels: usize,
    pub len: usize,
    pub data: Vec<f64>,
}

impl Arr {
    pub fn new(batch: usize, channels: usize, len: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), batch * channels * len);
        Self { batch, channels, len, data }
    }

    pub fn zeros(batch: usize, channels: usize, len: usize) -> Self {
        Self::new(batch, channels, len, vec![0.0; batch * channels * len])
    }

    pub fn at(&self, b: usize, c: usize, l: usize) -> f64 {
        self.data[(b * self.channels + c) * self.len + l]
    }

    pub fn at_mut(&mut self, b: usize, c: usize, l: usize) -> &mut f64 {
        &mut self.data[(b * self.channels + c) * self.len + l]
    }

    pub fn item(&self, b: usize) -> &[f64] {
        let per = self.channels * self.len;
        &self.data[b * per..(b + 1) * per]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { data: self.data.iter().map(|&v| f(v)).collect(), ..self.clone() }
    }

    pub fn add(&self, o: &Arr) -> Self {
        assert_eq!((self.batch, self.channels, self.len), (o.batch, o.channels, o.len));
        Self { data: self.data.iter().zip(&o.data).map(|(a, b)| a + b).collect(), ..self.clone() }
    }

    pub fn concat(&self, o: &Arr) -> Self {
        assert_eq!((self.batch, self.len), (o.batch, o.len));
        let mut out = Arr::zeros(self.batch, self.channels + o.channels, self.len);
        for b in 0..self.batch {
            for l in 0..self.len {
                for c in 0..self.channels {
                    *out.at_mut(b, c, l) = self.at(b, c, l);
                }
                for c in 0..o.channels {
                    *out.at_mut(b, self.channels + c, l) = o.at(b, c, l);
                }
            }
        }
        out
    }
}

/// `w` is `[q, cout, cin, k]` flattened.
fn widx(q: usize, co: usize, ci: usize, k: usize, cout: usize, cin: usize, kk: usize) -> usize {
    ((q * cout + co) * cin + ci) * kk + k
}

/// `y[b, co, lo] = bias[co] + Σ_q Σ_ci Σ_k w[q, co, ci, k] · x[b, ci, lo·s + k − p]^(q+1)`.
#[allow(clippy::too_many_arguments)]
pub fn selfonn_conv(x: &Arr, w: &[f64], bias: &[f64], q_order: usize, cout: usize, kk: usize, stride: usize, pad: usize) -> Arr {
    let cin = x.channels;
    assert_eq!(w.len(), q_order * cout * cin * kk);
    let out_len = (x.len + 2 * pad - kk) / stride + 1;
    let mut y = Arr::zeros(x.batch, cout, out_len);
    for b in 0..x.batch {
        for co in 0..cout {
            for lo in 0..out_len {
                let mut acc = bias[co];
                for q in 0..q_order {
                    for ci in 0..cin {
                        for k in 0..kk {
                            let li = (lo * stride + k) as isize - pad as isize;
                            if li < 0 || li as usize >= x.len {
                                continue;
                            }
                            let v = x.at(b, ci, li as usize);
                            acc += w[widx(q, co, ci, k, cout, cin, kk)] * v.powi(q as i32 + 1);
                        }
                    }
                }
                *y.at_mut(b, co, lo) = acc;
            }
        }
    }
    y
}

/// Scatter form: `y[b, co, li·s + k − p] += w[q, co, ci, k] · x[b, ci, li]^(q+1)`.
#[allow(clippy::too_many_arguments)]
pub fn selfonn_tconv(
    x: &Arr,
    w: &[f64],
    bias: &[f64],
    q_order: usize,
    cout: usize,
    kk: usize,
    stride: usize,
    pad: usize,
    output_padding: usize,
) -> Arr {
    let cin = x.channels;
    assert_eq!(w.len(), q_order * cout * cin * kk);
    let out_len = (x.len - 1) * stride + kk + output_padding - 2 * pad;
    let mut y = Arr::zeros(x.batch, cout, out_len);
    for b in 0..x.batch {
        for co in 0..cout {
            for lo in 0..out_len {
                *y.at_mut(b, co, lo) = bias[co];
            }
            for q in 0..q_order {
                for ci in 0..cin {
                    for li in 0..x.len {
                        let v = x.at(b, ci, li).powi(q as i32 + 1);
                        for k in 0..kk {
                            let lo = (li * stride + k) as isize - pad as isize;
                            if lo >= 0 && (lo as usize) < out_len {
                                *y.at_mut(b, co, lo as usize) += w[widx(q, co, ci, k, cout, cin, kk)] * v;
                            }
                        }
                    }
                }
            }
        }
    }
    y
}

/// Biased-variance instance norm with affine parameters.
pub fn instance_norm(x: &Arr, gamma: &[f64], beta: &[f64], eps: f64) -> Arr {
    let mut y = x.clone();
    for b in 0..x.batch {
        for c in 0..x.channels {
            let n = x.len as f64;
            let mean = (0..x.len).map(|l| x.at(b, c, l)).sum::<f64>() / n;
            let var = (0..x.len).map(|l| (x.at(b, c, l) - mean).powi(2)).sum::<f64>() / n;
            for l in 0..x.len {
                *y.at_mut(b, c, l) = gamma[c] * (x.at(b, c, l) - mean) / (var + eps).sqrt() + beta[c];
            }
        }
    }
    y
}

pub fn tanh(x: &Arr) -> Arr {
    x.map(f64::tanh)
}

pub fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// `[B, C, L] -> [B, C]`.
pub fn avg_pool(x: &Arr) -> Vec<Vec<f64>> {
    (0..x.batch)
        .map(|b| (0..x.channels).map(|c| (0..x.len).map(|l| x.at(b, c, l)).sum::<f64>() / x.len as f64).collect())
        .collect()
}

/// `y = W·x + b` with `W` as `[out, feat]`.
pub fn linear(x: &[f64], w: &[f64], bias: &[f64]) -> Vec<f64> {
    let feat = x.len();
    bias.iter().enumerate().map(|(o, &b)| b + (0..feat).map(|f| w[o * feat + f] * x[f]).sum::<f64>()).collect()
}

pub fn hann(n: usize) -> Vec<f64> {
    (0..n).map(|m| 0.5 - 0.5 * (2.0 * PI * m as f64 / n as f64).cos()).collect()
}

/// Magnitude STFT of `i + j·q` by direct DFT, `[frames][bins]` flattened.
pub fn stft_magnitude(i: &[f64], q: &[f64], window: usize, hop: usize) -> Vec<f64> {
    let win = hann(window);
    let frames = (i.len() - window) / hop + 1;
    let mut out = Vec::with_capacity(frames * window);
    for f in 0..frames {
        for k in 0..window {
            let (mut re, mut im) = (0.0, 0.0);
            for m in 0..window {
                let a = win[m] * i[f * hop + m];
                let c = win[m] * q[f * hop + m];
                let th = -2.0 * PI * (k * m) as f64 / window as f64;
                re += a * th.cos() - c * th.sin();
                im += a * th.sin() + c * th.cos();
            }
            out.push((re * re + im * im).sqrt());
        }
    }
    out
}

pub fn mse(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64
}

/// `10·log10(max(peak², floor) / max(mse, floor))`, peak = max of `clean`.
pub fn psnr(clean: &[f64], candidate: &[f64]) -> f64 {
    let peak = clean.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    10.0 * ((peak * peak).max(MSE_FLOOR) / mse(clean, candidate).max(MSE_FLOOR)).log10()
}

/// `10·log10(Σs² / max(Σ(s − ŝ)², floor))`.
pub fn snr_db(clean: &[f64], candidate: &[f64]) -> f64 {
    let p: f64 = clean.iter().map(|v| v * v).sum();
    let e: f64 = clean.iter().zip(candidate).map(|(a, b)| (a - b) * (a - b)).sum();
    10.0 * (p / e.max(MSE_FLOOR)).log10()
}

/// Network hyperparameters shared by the oracle forwards.
#[derive(Debug, Clone)]
pub struct Net {
    pub widths: Vec<usize>,
    pub q_order: usize,
    pub kernel: usize,
    pub eps: f64,
}

struct Params<'a> {
    list: &'a [Vec<f64>],
    at: usize,
}

impl<'a> Params<'a> {
    fn next(&mut self) -> &'a [f64] {
        let p = &self.list[self.at];
        self.at += 1;
        p
    }
}

fn block(x: &Arr, cout: usize, net: &Net, p: &mut Params<'_>, up: bool, hidden: bool) -> Arr {
    let pad = net.kernel / 2;
    let (w, b) = (p.next(), p.next());
    let mut main = if up {
        selfonn_tconv(x, w, b, net.q_order, cout, net.kernel, 2, pad, 1)
    } else {
        selfonn_conv(x, w, b, net.q_order, cout, net.kernel, 2, pad)
    };
    if hidden {
        let (g, bt) = (p.next(), p.next());
        main = tanh(&instance_norm(&main, g, bt, net.eps));
    }
    let (sw, sb) = (p.next(), p.next());
    let skip = if up { selfonn_tconv(x, sw, sb, 1, cout, 1, 2, 0, 1) } else { selfonn_conv(x, sw, sb, 1, cout, 1, 2, 0) };
    let sum = main.add(&skip);
    if hidden {
        sum
    } else {
        tanh(&sum)
    }
}

/// Evaluation-mode apprentice: five down blocks, four up blocks with
/// concatenated skips, and a tanh output stage to `out_channels`.
pub fn ar_forward(x: &Arr, net: &Net, out_channels: usize, params: &[Vec<f64>]) -> Arr {
    let mut p = Params { list: params, at: 0 };
    let mut skips = Vec::new();
    let mut h = x.clone();
    for &w in &net.widths {
        h = block(&h, w, net, &mut p, false, true);
        skips.push(h.clone());
    }
    skips.pop();
    for j in (0..net.widths.len() - 1).rev() {
        h = block(&h, net.widths[j], net, &mut p, true, true);
        h = h.concat(&skips.pop().unwrap());
    }
    let y = block(&h, out_channels, net, &mut p, true, false);
    assert_eq!(p.at, params.len());
    y
}

/// Evaluation-mode master score per batch item.
pub fn mr_forward(r: &Arr, candidate: &Arr, net: &Net, params: &[Vec<f64>]) -> Vec<f64> {
    let mut p = Params { list: params, at: 0 };
    let mut h = r.concat(candidate);
    for &w in &net.widths {
        h = block(&h, w, net, &mut p, false, true);
    }
    let (w, b) = (p.next(), p.next());
    assert_eq!(p.at, params.len());
    avg_pool(&h).iter().map(|f| sigmoid(linear(f, w, b)[0])).collect()
}

/// Per-item spectrogram of a `[B, 2, L]` array.
pub fn spectrograms(x: &Arr, window: usize, hop: usize) -> Vec<Vec<f64>> {
    (0..x.batch)
        .map(|b| {
            let it = x.item(b);
            stft_magnitude(&it[..x.len], &it[x.len..], window, hop)
        })
        .collect()
}

#[derive(Debug, Clone, Copy)]
pub struct Weights {
    pub epsilon: f64,
    pub beta: f64,
    pub phi: f64,
}

/// `(total, fidelity, time, freq)` of the apprentice loss.
#[allow(clippy::too_many_arguments)]
pub fn loss_apprentice(
    r: &Arr,
    s: &Arr,
    s_hat: &Arr,
    mr: &Net,
    mr_params: &[Vec<f64>],
    w: Weights,
    window: usize,
    hop: usize,
) -> (f64, f64, f64, f64) {
    let n = s.batch as f64;
    let m = mr_forward(r, s_hat, mr, mr_params);
    let fid = m.iter().map(|v| (v - 1.0).powi(2)).sum::<f64>() / n;
    let time = -(0..s.batch).map(|b| psnr(s.item(b), s_hat.item(b))).sum::<f64>() / n;
    let (ss, sh) = (spectrograms(s, window, hop), spectrograms(s_hat, window, hop));
    let freq = -ss.iter().zip(&sh).map(|(a, b)| psnr(a, b)).sum::<f64>() / n;
    (w.epsilon * fid + w.beta * time + w.phi * freq, fid, time, freq)
}

/// Master loss with `y_res` labels given explicitly.
pub fn loss_master(r: &Arr, s: &Arr, s_hat: &Arr, labels: &[f64], mr: &Net, mr_params: &[Vec<f64>]) -> f64 {
    let n = s.batch as f64;
    let a = mr_forward(r, s, mr, mr_params).iter().map(|v| (v - 1.0).powi(2)).sum::<f64>() / n;
    let b = mr_forward(r, s_hat, mr, mr_params).iter().zip(labels).map(|(v, y)| (v - y).powi(2)).sum::<f64>() / n;
    0.5 * (a + b)
}

/// Central difference `(f(x + h) − f(x − h)) / 2h` in coordinate `i`.
pub fn central_diff(x: &mut [f64], i: usize, h: f64, mut f: impl FnMut(&[f64]) -> f64) -> f64 {
    let orig = x[i];
    x[i] = orig + h;
    let up = f(x);
    x[i] = orig - h;
    let down = f(x);
    x[i] = orig;
    (up - down) / (2.0 * h)
}

/// `|a − b| / max(|a|, |b|, floor)`.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_kernel_conv_copies_input() {
        let x = Arr::new(1, 1, 4, vec![1.0, 2.0, 3.0, 4.0]);
        let y = selfonn_conv(&x, &[0.0, 1.0, 0.0], &[0.0], 1, 1, 3, 1, 1);
        assert_eq!(y.data, x.data);
    }

    #[test]
    fn tconv_is_adjoint_of_conv() {
        let x = Arr::new(1, 2, 8, (0..16).map(|v| (v as f64 * 0.37).sin()).collect());
        let g = Arr::new(1, 3, 4, (0..12).map(|v| (v as f64 * 0.91).cos()).collect());
        let w: Vec<f64> = (0..18).map(|v| (v as f64 * 0.53).sin()).collect();
        let y = selfonn_conv(&x, &w, &[0.0; 3], 1, 3, 3, 2, 1);
        // tconv maps [cout] -> [cin]; transpose the weight's channel axes
        let mut wt = vec![0.0; 18];
        for co in 0..3 {
            for ci in 0..2 {
                for k in 0..3 {
                    wt[(ci * 3 + co) * 3 + k] = w[(co * 2 + ci) * 3 + k];
                }
            }
        }
        let z = selfonn_tconv(&g, &wt, &[0.0; 2], 1, 2, 3, 2, 1, 1);
        let lhs: f64 = y.data.iter().zip(&g.data).map(|(a, b)| a * b).sum();
        let rhs: f64 = z.data.iter().zip(&x.data).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn tone_concentrates_in_one_bin() {
        let n = 256;
        let i: Vec<f64> = (0..n).map(|m| (2.0 * PI * 4.0 * m as f64 / 64.0).cos()).collect();
        let q: Vec<f64> = (0..n).map(|m| (2.0 * PI * 4.0 * m as f64 / 64.0).sin()).collect();
        let s = stft_magnitude(&i, &q, 64, 16);
        let frame = &s[..64];
        let peak = frame.iter().cloned().fold(0.0, f64::max);
        assert_eq!(frame[4], peak);
    }
}
