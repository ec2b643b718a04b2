//! Dense kernels behind the tape ops.
//!
//! Convolutions are lowered to column matrices and one `sgemm` per batch
//! item. Reduction order depends only on the shapes, so results are
//! bit-reproducible for a given build.

use alloc::vec;
use alloc::vec::Vec;

/// Row-major view with explicit strides.
#[derive(Clone, Copy)]
pub(crate) struct Mat<'a> {
    pub data: &'a [f32],
    pub rs: usize,
    pub cs: usize,
}

impl<'a> Mat<'a> {
    pub fn rows(data: &'a [f32], cols: usize) -> Self {
        Self { data, rs: cols, cs: 1 }
    }

    /// Transposed view of a row-major `[r, c]` matrix: `[c, r]`.
    pub fn transposed(data: &'a [f32], cols: usize) -> Self {
        Self { data, rs: 1, cs: cols }
    }
}

/// `C[m×n] = A[m×k]·B[k×n] + beta·C`, with `C` row-major and contiguous.
pub(crate) fn gemm(m: usize, k: usize, n: usize, a: Mat<'_>, b: Mat<'_>, beta: f32, c: &mut [f32]) {
    if m == 0 || n == 0 {
        return;
    }
    assert!(c.len() >= m * n);
    if k == 0 {
        for v in &mut c[..m * n] {
            *v *= beta;
        }
        return;
    }
    assert!((m - 1) * a.rs + (k - 1) * a.cs < a.data.len());
    assert!((k - 1) * b.rs + (n - 1) * b.cs < b.data.len());
    // SAFETY: the asserts above bound every index sgemm touches.
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            1.0,
            a.data.as_ptr(),
            a.rs as isize,
            a.cs as isize,
            b.data.as_ptr(),
            b.rs as isize,
            b.cs as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Geometry of a (possibly transposed) generative-neuron convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub q_order: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    /// Extra samples appended to a transposed output.
    pub output_padding: usize,
    pub transposed: bool,
}

impl ConvGeom {
    pub fn out_len(&self, len: usize) -> Option<usize> {
        if self.stride == 0 {
            return None;
        }
        if self.transposed {
            ((len - 1) * self.stride + self.kernel + self.output_padding).checked_sub(2 * self.padding)
        } else {
            (len + 2 * self.padding).checked_sub(self.kernel).map(|v| v / self.stride + 1)
        }
    }

    fn weight_index(&self, q: usize, co: usize, ci: usize, k: usize) -> usize {
        ((q * self.out_channels + co) * self.in_channels + ci) * self.kernel + k
    }
}

/// `xp[(q, ci), l] = x[ci, l]^(q+1)` for one batch item.
fn fill_powers(x: &[f32], cin: usize, len: usize, q_order: usize, xp: &mut [f32]) {
    xp[..cin * len].copy_from_slice(&x[..cin * len]);
    for q in 1..q_order {
        let (prev, cur) = xp.split_at_mut(q * cin * len);
        let prev = &prev[(q - 1) * cin * len..];
        for ((c, &p), &v) in cur[..cin * len].iter_mut().zip(prev).zip(x) {
            *c = p * v;
        }
    }
}

/// `dx[ci, l] += Σ_q (q+1)·x^q·dxp[(q, ci), l]`.
fn chain_powers(x: &[f32], dxp: &[f32], cin: usize, len: usize, q_order: usize, dx: &mut [f32]) {
    let n = cin * len;
    for i in 0..n {
        let v = x[i];
        let mut pow = 1.0f32;
        let mut acc = 0.0f32;
        for q in 0..q_order {
            acc += (q + 1) as f32 * pow * dxp[q * n + i];
            pow *= v;
        }
        dx[i] += acc;
    }
}

struct Lowered {
    /// Weights rearranged for the gemm.
    wm: Vec<f32>,
}

fn lower_weights(g: &ConvGeom, w: &[f32]) -> Lowered {
    let (q_order, cin, cout, kk) = (g.q_order, g.in_channels, g.out_channels, g.kernel);
    let mut wm = vec![0.0; w.len()];
    for q in 0..q_order {
        for co in 0..cout {
            for ci in 0..cin {
                for k in 0..kk {
                    let src = g.weight_index(q, co, ci, k);
                    let dst = if g.transposed {
                        // [(co, k), (q, ci)]
                        (co * kk + k) * (q_order * cin) + q * cin + ci
                    } else {
                        // [co, (q, ci, k)]
                        co * (q_order * cin * kk) + (q * cin + ci) * kk + k
                    };
                    wm[dst] = w[src];
                }
            }
        }
    }
    Lowered { wm }
}

fn raise_weights(g: &ConvGeom, dwm: &[f32], dw: &mut [f32]) {
    let (q_order, cin, cout, kk) = (g.q_order, g.in_channels, g.out_channels, g.kernel);
    for q in 0..q_order {
        for co in 0..cout {
            for ci in 0..cin {
                for k in 0..kk {
                    let dst = g.weight_index(q, co, ci, k);
                    let src = if g.transposed {
                        (co * kk + k) * (q_order * cin) + q * cin + ci
                    } else {
                        co * (q_order * cin * kk) + (q * cin + ci) * kk + k
                    };
                    dw[dst] += dwm[src];
                }
            }
        }
    }
}

/// Column matrix `[(q, ci, k), lo]` of a forward convolution.
fn im2col(g: &ConvGeom, xp: &[f32], len: usize, out_len: usize, cols: &mut [f32]) {
    let rows = g.q_order * g.in_channels;
    for r in 0..rows {
        let src = &xp[r * len..(r + 1) * len];
        for k in 0..g.kernel {
            let dst = &mut cols[(r * g.kernel + k) * out_len..(r * g.kernel + k + 1) * out_len];
            for (lo, d) in dst.iter_mut().enumerate() {
                let li = (lo * g.stride + k) as isize - g.padding as isize;
                *d = if li >= 0 && (li as usize) < len { src[li as usize] } else { 0.0 };
            }
        }
    }
}

fn col2im(g: &ConvGeom, dcols: &[f32], len: usize, out_len: usize, dxp: &mut [f32]) {
    let rows = g.q_order * g.in_channels;
    for r in 0..rows {
        let dst = &mut dxp[r * len..(r + 1) * len];
        for k in 0..g.kernel {
            let src = &dcols[(r * g.kernel + k) * out_len..(r * g.kernel + k + 1) * out_len];
            for (lo, &s) in src.iter().enumerate() {
                let li = (lo * g.stride + k) as isize - g.padding as isize;
                if li >= 0 && (li as usize) < len {
                    dst[li as usize] += s;
                }
            }
        }
    }
}

/// Forward pass; `x` is `[batch, in, len]`, returns `[batch, out, out_len]`.
pub(crate) fn conv_forward(g: &ConvGeom, x: &[f32], batch: usize, len: usize, w: &[f32], bias: &[f32]) -> Vec<f32> {
    let out_len = g.out_len(len).expect("validated geometry");
    let (cin, cout) = (g.in_channels, g.out_channels);
    let lw = lower_weights(g, w);
    let mut out = vec![0.0; batch * cout * out_len];
    let mut xp = vec![0.0; g.q_order * cin * len];
    let p = g.q_order * cin;
    if g.transposed {
        let mut y = vec![0.0; cout * g.kernel * len];
        for b in 0..batch {
            fill_powers(&x[b * cin * len..(b + 1) * cin * len], cin, len, g.q_order, &mut xp);
            gemm(cout * g.kernel, p, len, Mat::rows(&lw.wm, p), Mat::rows(&xp, len), 0.0, &mut y);
            let ob = &mut out[b * cout * out_len..(b + 1) * cout * out_len];
            for co in 0..cout {
                ob[co * out_len..(co + 1) * out_len].fill(bias[co]);
                for k in 0..g.kernel {
                    let row = &y[(co * g.kernel + k) * len..(co * g.kernel + k + 1) * len];
                    for (li, &v) in row.iter().enumerate() {
                        let lo = (li * g.stride + k) as isize - g.padding as isize;
                        if lo >= 0 && (lo as usize) < out_len {
                            ob[co * out_len + lo as usize] += v;
                        }
                    }
                }
            }
        }
    } else {
        let j = p * g.kernel;
        let mut cols = vec![0.0; j * out_len];
        for b in 0..batch {
            fill_powers(&x[b * cin * len..(b + 1) * cin * len], cin, len, g.q_order, &mut xp);
            im2col(g, &xp, len, out_len, &mut cols);
            let ob = &mut out[b * cout * out_len..(b + 1) * cout * out_len];
            for co in 0..cout {
                ob[co * out_len..(co + 1) * out_len].fill(bias[co]);
            }
            gemm(cout, j, out_len, Mat::rows(&lw.wm, j), Mat::rows(&cols, out_len), 1.0, ob);
        }
    }
    out
}

/// Gradients of a convolution. Any of the outputs may be skipped.
pub(crate) struct ConvGrads<'a> {
    pub dx: Option<&'a mut [f32]>,
    pub dw: Option<&'a mut [f32]>,
    pub db: Option<&'a mut [f32]>,
}

pub(crate) fn conv_backward(
    g: &ConvGeom,
    x: &[f32],
    batch: usize,
    len: usize,
    w: &[f32],
    gout: &[f32],
    mut grads: ConvGrads<'_>,
) {
    let out_len = g.out_len(len).expect("validated geometry");
    let (cin, cout) = (g.in_channels, g.out_channels);
    let p = g.q_order * cin;
    let lw = lower_weights(g, w);
    let mut dwm = grads.dw.as_ref().map(|_| vec![0.0; w.len()]);
    let mut xp = vec![0.0; p * len];
    let mut dxp = vec![0.0; p * len];

    for b in 0..batch {
        let gb = &gout[b * cout * out_len..(b + 1) * cout * out_len];
        if let Some(db) = grads.db.as_deref_mut() {
            for co in 0..cout {
                db[co] += gb[co * out_len..(co + 1) * out_len].iter().sum::<f32>();
            }
        }
        let xb = &x[b * cin * len..(b + 1) * cin * len];
        fill_powers(xb, cin, len, g.q_order, &mut xp);

        if g.transposed {
            let rows = cout * g.kernel;
            let mut dy = vec![0.0; rows * len];
            for co in 0..cout {
                for k in 0..g.kernel {
                    let row = &mut dy[(co * g.kernel + k) * len..(co * g.kernel + k + 1) * len];
                    for (li, d) in row.iter_mut().enumerate() {
                        let lo = (li * g.stride + k) as isize - g.padding as isize;
                        if lo >= 0 && (lo as usize) < out_len {
                            *d = gb[co * out_len + lo as usize];
                        }
                    }
                }
            }
            if let Some(dwm) = dwm.as_mut() {
                gemm(rows, len, p, Mat::rows(&dy, len), Mat::transposed(&xp, len), 1.0, dwm);
            }
            if grads.dx.is_some() {
                gemm(p, rows, len, Mat::transposed(&lw.wm, p), Mat::rows(&dy, len), 0.0, &mut dxp);
            }
        } else {
            let j = p * g.kernel;
            let mut cols = vec![0.0; j * out_len];
            im2col(g, &xp, len, out_len, &mut cols);
            if let Some(dwm) = dwm.as_mut() {
                gemm(cout, out_len, j, Mat::rows(gb, out_len), Mat::transposed(&cols, out_len), 1.0, dwm);
            }
            if grads.dx.is_some() {
                let mut dcols = vec![0.0; j * out_len];
                gemm(j, cout, out_len, Mat::transposed(&lw.wm, j), Mat::rows(gb, out_len), 0.0, &mut dcols);
                dxp.fill(0.0);
                col2im(g, &dcols, len, out_len, &mut dxp);
            }
        }

        if let Some(dx) = grads.dx.as_deref_mut() {
            chain_powers(xb, &dxp, cin, len, g.q_order, &mut dx[b * cin * len..(b + 1) * cin * len]);
        }
    }
    if let (Some(dwm), Some(dw)) = (dwm, grads.dw.as_deref_mut()) {
        raise_weights(g, &dwm, dw);
    }
}
