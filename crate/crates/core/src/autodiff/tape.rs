use alloc::boxed::Box;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;

use super::kernels::{conv_backward, conv_forward, gemm, ConvGeom, ConvGrads, Mat};
use super::tensor::Tensor;
use crate::error::{dim_err, Error, Result};
use crate::rng;
use crate::spectrogram::{SpectrogramConfig, StftParts, StftPlan};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op {
    Leaf,
    Conv { x: Var, w: Var, b: Var, geom: ConvGeom },
    InstanceNorm { x: Var, gamma: Var, beta: Var, xhat: Vec<f32>, inv_std: Vec<f32> },
    Tanh(Var),
    Sigmoid(Var),
    Dropout { x: Var, mask: Vec<f32> },
    AvgPool(Var),
    Linear { x: Var, w: Var, b: Var },
    Concat { a: Var, b: Var },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f32),
    Power { x: Var, q: u32 },
    MeanAll(Var),
    MeanItems(Var),
    ClampMin { x: Var, min: f32 },
    Log10(Var),
    Stft { x: Var, plan: Box<StftPlan>, parts: StftParts },
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Records a forward computation for one reverse sweep.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Vec<f32>>>,
}

impl Gradients {
    /// `None` when the node does not require gradients or is not connected
    /// to the loss.
    pub fn get(&self, v: Var) -> Option<&[f32]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    pub fn take(&mut self, v: Var) -> Option<Vec<f32>> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

fn same_shape(a: &Tensor, b: &Tensor, what: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(dim_err!("{what}: shape mismatch {:?} vs {:?}", a.shape(), b.shape()));
    }
    Ok(())
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Adds an input. Constants use `requires_grad = false` and never receive
    /// gradients.
    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        debug_assert!(value.is_finite(), "non-finite value produced by {}", op_name(&op));
        self.nodes.push(Node { value, op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Generative-neuron convolution: `y = b + Σ_q conv(w_q, x^(q+1))`.
    ///
    /// `x` is `[B, Cin, L]`, `w` is `[Q, Cout, Cin, K]`, `b` is `[Cout]`.
    pub fn selfonn_conv1d(&mut self, x: Var, w: Var, b: Var, stride: usize, padding: usize) -> Result<Var> {
        self.conv_impl(x, w, b, stride, padding, 0, false, false)
    }

    /// Transposed generative-neuron convolution. Output length is
    /// `(L-1)·stride - 2·padding + K + output_padding`.
    pub fn selfonn_tconv1d(
        &mut self,
        x: Var,
        w: Var,
        b: Var,
        stride: usize,
        padding: usize,
        output_padding: usize,
    ) -> Result<Var> {
        self.conv_impl(x, w, b, stride, padding, output_padding, true, false)
    }

    /// Plain convolution with `w` of shape `[Cout, Cin, K]`.
    pub fn conv1d(&mut self, x: Var, w: Var, b: Var, stride: usize, padding: usize) -> Result<Var> {
        self.conv_impl(x, w, b, stride, padding, 0, false, true)
    }

    /// Plain transposed convolution with `w` of shape `[Cout, Cin, K]`.
    pub fn tconv1d(
        &mut self,
        x: Var,
        w: Var,
        b: Var,
        stride: usize,
        padding: usize,
        output_padding: usize,
    ) -> Result<Var> {
        self.conv_impl(x, w, b, stride, padding, output_padding, true, true)
    }

    #[allow(clippy::too_many_arguments)]
    fn conv_impl(
        &mut self,
        x: Var,
        w: Var,
        b: Var,
        stride: usize,
        padding: usize,
        output_padding: usize,
        transposed: bool,
        plain: bool,
    ) -> Result<Var> {
        let (batch, cin, len) = self.value(x).dims3()?;
        let (q_order, cout, wcin, kernel) = match (plain, self.value(w).shape()) {
            (false, &[q, co, ci, k]) => (q, co, ci, k),
            (true, &[co, ci, k]) => (1, co, ci, k),
            (false, s) => return Err(dim_err!("generative conv weight must be [Q, Cout, Cin, K], got {s:?}")),
            (true, s) => return Err(dim_err!("conv weight must be [Cout, Cin, K], got {s:?}")),
        };
        if q_order == 0 {
            return Err(dim_err!("generative conv needs Q >= 1"));
        }
        if wcin != cin {
            return Err(dim_err!("conv expects {wcin} input channels, got {cin}"));
        }
        if self.value(b).shape() != [cout] {
            return Err(dim_err!("conv bias must be [{cout}], got {:?}", self.value(b).shape()));
        }
        if transposed && output_padding > 0 && output_padding >= stride {
            return Err(dim_err!("output padding {output_padding} must be smaller than stride {stride}"));
        }
        let geom = ConvGeom {
            q_order,
            in_channels: cin,
            out_channels: cout,
            kernel,
            stride,
            padding,
            output_padding,
            transposed,
        };
        let out_len = geom
            .out_len(len)
            .filter(|&l| l > 0)
            .ok_or_else(|| dim_err!("convolution geometry {geom:?} invalid for length {len}"))?;
        let out = conv_forward(
            &geom,
            self.value(x).data(),
            batch,
            len,
            self.value(w).data(),
            self.value(b).data(),
        );
        let value = Tensor::new(&[batch, cout, out_len], out)?;
        let rg = self.rg(&[x, w, b]);
        Ok(self.push(value, Op::Conv { x, w, b, geom }, rg))
    }

    /// Per-(item, channel) standardization over length, then affine.
    pub fn instance_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f32) -> Result<Var> {
        let (batch, ch, len) = self.value(x).dims3()?;
        if len < 2 {
            return Err(dim_err!("instance norm needs length >= 2, got {len}"));
        }
        if self.value(gamma).shape() != [ch] || self.value(beta).shape() != [ch] {
            return Err(dim_err!("instance norm affine parameters must be [{ch}]"));
        }
        let xv = self.value(x).data();
        let (g, bt) = (self.value(gamma).data(), self.value(beta).data());
        let mut xhat = vec![0.0; xv.len()];
        let mut inv_std = vec![0.0; batch * ch];
        let mut out = vec![0.0; xv.len()];
        for row in 0..batch * ch {
            let xs = &xv[row * len..(row + 1) * len];
            let mean = xs.iter().sum::<f32>() / len as f32;
            let var = xs.iter().map(|&v| (v - mean) * (v - mean)).sum::<f32>() / len as f32;
            let is = 1.0 / libm::sqrtf(var + eps);
            inv_std[row] = is;
            let c = row % ch;
            for l in 0..len {
                let h = (xs[l] - mean) * is;
                xhat[row * len + l] = h;
                out[row * len + l] = g[c] * h + bt[c];
            }
        }
        let value = Tensor::new(self.value(x).shape(), out)?;
        let rg = self.rg(&[x, gamma, beta]);
        Ok(self.push(value, Op::InstanceNorm { x, gamma, beta, xhat, inv_std }, rg))
    }

    fn unary(&mut self, x: Var, f: impl Fn(f32) -> f32, op: Op) -> Var {
        let src = self.value(x);
        let data = src.data().iter().map(|&v| f(v)).collect();
        let value = Tensor::new(src.shape(), data).expect("same shape");
        let rg = self.rg(&[x]);
        self.push(value, op, rg)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, libm::tanhf, Op::Tanh(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, |v| 1.0 / (1.0 + libm::expf(-v)), Op::Sigmoid(x))
    }

    pub fn scale(&mut self, x: Var, factor: f32) -> Var {
        self.unary(x, |v| v * factor, Op::Scale(x, factor))
    }

    pub fn power(&mut self, x: Var, q: u32) -> Var {
        self.unary(x, |v| (0..q).fold(1.0, |acc, _| acc * v), Op::Power { x, q })
    }

    pub fn square(&mut self, x: Var) -> Var {
        self.power(x, 2)
    }

    pub fn log10(&mut self, x: Var) -> Var {
        self.unary(x, libm::log10f, Op::Log10(x))
    }

    pub fn clamp_min(&mut self, x: Var, min: f32) -> Var {
        self.unary(x, |v| v.max(min), Op::ClampMin { x, min })
    }

    /// Inverted dropout; identity (the same handle) when `train` is false.
    pub fn dropout(&mut self, x: Var, rate: f32, train: bool, seed: u64) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Parameter(format!("dropout rate {rate} outside [0, 1)")));
        }
        if !train || rate == 0.0 {
            return Ok(x);
        }
        let keep = 1.0 / (1.0 - rate);
        let mut r = rng::rng_from(seed);
        let mask: Vec<f32> =
            (0..self.value(x).numel()).map(|_| if r.random::<f32>() < rate { 0.0 } else { keep }).collect();
        let src = self.value(x);
        let data = src.data().iter().zip(&mask).map(|(&v, &m)| v * m).collect();
        let value = Tensor::new(src.shape(), data)?;
        let rg = self.rg(&[x]);
        Ok(self.push(value, Op::Dropout { x, mask }, rg))
    }

    /// Mean over the length axis: `[B, C, L] -> [B, C, 1]`.
    pub fn adaptive_avg_pool1d(&mut self, x: Var) -> Result<Var> {
        let (batch, ch, len) = self.value(x).dims3()?;
        let data = self.value(x).data().chunks(len).map(|c| c.iter().sum::<f32>() / len as f32).collect();
        let value = Tensor::new(&[batch, ch, 1], data)?;
        let rg = self.rg(&[x]);
        Ok(self.push(value, Op::AvgPool(x), rg))
    }

    /// `y = x·Wᵀ + b`; `x` is `[B, ...]` flattened to `[B, F]`, `w` is `[O, F]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (batch, feat) = self.value(x).items();
        let (out, wf) = match self.value(w).shape()[..] {
            [o, f] => (o, f),
            ref s => return Err(dim_err!("linear weight must be [O, F], got {s:?}")),
        };
        if wf != feat {
            return Err(dim_err!("linear expects {wf} features, got {feat}"));
        }
        if self.value(b).shape() != [out] {
            return Err(dim_err!("linear bias must be [{out}]"));
        }
        let mut y = Vec::with_capacity(batch * out);
        for _ in 0..batch {
            y.extend_from_slice(self.value(b).data());
        }
        gemm(
            batch,
            feat,
            out,
            Mat::rows(self.value(x).data(), feat),
            Mat::transposed(self.value(w).data(), feat),
            1.0,
            &mut y,
        );
        let value = Tensor::new(&[batch, out], y)?;
        let rg = self.rg(&[x, w, b]);
        Ok(self.push(value, Op::Linear { x, w, b }, rg))
    }

    /// Channel-wise concatenation of two `[B, C, L]` tensors.
    pub fn concat_channels(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ba, ca, la) = self.value(a).dims3()?;
        let (bb, cb, lb) = self.value(b).dims3()?;
        if ba != bb || la != lb {
            return Err(dim_err!("concat: [{ba}, _, {la}] vs [{bb}, _, {lb}]"));
        }
        let mut data = Vec::with_capacity(ba * (ca + cb) * la);
        for i in 0..ba {
            data.extend_from_slice(&self.value(a).data()[i * ca * la..(i + 1) * ca * la]);
            data.extend_from_slice(&self.value(b).data()[i * cb * lb..(i + 1) * cb * lb]);
        }
        let value = Tensor::new(&[ba, ca + cb, la], data)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(value, Op::Concat { a, b }, rg))
    }

    fn binary(&mut self, a: Var, b: Var, f: impl Fn(f32, f32) -> f32, op: Op, name: &str) -> Result<Var> {
        same_shape(self.value(a), self.value(b), name)?;
        let data = self.value(a).data().iter().zip(self.value(b).data()).map(|(&x, &y)| f(x, y)).collect();
        let value = Tensor::new(self.value(a).shape(), data)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(value, op, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, |x, y| x + y, Op::Add(a, b), "add")
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, |x, y| x - y, Op::Sub(a, b), "sub")
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, |x, y| x * y, Op::Mul(a, b), "mul")
    }

    /// Mean of every element, as a `[1]` tensor.
    pub fn mean_all(&mut self, x: Var) -> Var {
        let src = self.value(x);
        let m = (src.data().iter().map(|&v| f64::from(v)).sum::<f64>() / src.numel() as f64) as f32;
        let rg = self.rg(&[x]);
        self.push(Tensor::scalar(m), Op::MeanAll(x), rg)
    }

    /// Mean over everything but the leading axis: `[B, ...] -> [B]`.
    pub fn mean_items(&mut self, x: Var) -> Var {
        let (batch, per) = self.value(x).items();
        let data = self
            .value(x)
            .data()
            .chunks(per)
            .map(|c| (c.iter().map(|&v| f64::from(v)).sum::<f64>() / per as f64) as f32)
            .collect();
        let rg = self.rg(&[x]);
        self.push(Tensor::new(&[batch], data).expect("batch > 0"), Op::MeanItems(x), rg)
    }

    /// Magnitude STFT of `[B, 2, L]` complex input, `[B, frames, bins]`.
    pub fn spectrogram(&mut self, x: Var, cfg: SpectrogramConfig) -> Result<Var> {
        let (batch, ch, len) = self.value(x).dims3()?;
        if ch != 2 {
            return Err(dim_err!("spectrogram needs 2 (I/Q) channels, got {ch}"));
        }
        let plan = StftPlan::new(cfg, len)?;
        let (mag, parts) = plan.forward(self.value(x).data(), batch);
        let value = Tensor::new(&[batch, plan.frames(), cfg.bins()], mag)?;
        let rg = self.rg(&[x]);
        Ok(self.push(value, Op::Stft { x, plan: Box::new(plan), parts }, rg))
    }

    /// Reverse sweep from a scalar `loss`, consuming the tape.
    pub fn backward(self, loss: Var) -> Result<Gradients> {
        if self.value(loss).numel() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f32>>> = (0..self.nodes.len()).map(|_| None).collect();
        if !self.nodes[loss.0].requires_grad {
            return Ok(Gradients { grads });
        }
        grads[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            self.propagate(&node.op, &node.value, &g, &mut grads);
            grads[i] = Some(g);
        }
        for (node, g) in self.nodes.iter().zip(grads.iter_mut()) {
            if !matches!(node.op, Op::Leaf) || !node.requires_grad {
                *g = None;
            }
        }
        Ok(Gradients { grads })
    }

    fn grad_slot<'a>(&self, grads: &'a mut [Option<Vec<f32>>], v: Var) -> Option<&'a mut [f32]> {
        let node = &self.nodes[v.0];
        if !node.requires_grad {
            return None;
        }
        Some(grads[v.0].get_or_insert_with(|| vec![0.0; node.value.numel()]).as_mut_slice())
    }

    fn take_slot(&self, grads: &mut [Option<Vec<f32>>], v: Var) -> Option<Vec<f32>> {
        let node = &self.nodes[v.0];
        if !node.requires_grad {
            return None;
        }
        Some(grads[v.0].take().unwrap_or_else(|| vec![0.0; node.value.numel()]))
    }

    fn propagate(&self, op: &Op, out: &Tensor, g: &[f32], grads: &mut [Option<Vec<f32>>]) {
        let val = |v: Var| self.nodes[v.0].value.data();
        match op {
            Op::Leaf => {}
            Op::Conv { x, w, b, geom } => {
                let (batch, _, len) = self.value(*x).dims3().expect("checked");
                let mut dx = self.take_slot(grads, *x);
                let mut dw = self.take_slot(grads, *w);
                let mut db = self.take_slot(grads, *b);
                conv_backward(
                    geom,
                    val(*x),
                    batch,
                    len,
                    val(*w),
                    g,
                    ConvGrads { dx: dx.as_deref_mut(), dw: dw.as_deref_mut(), db: db.as_deref_mut() },
                );
                for (v, d) in [(*x, dx), (*w, dw), (*b, db)] {
                    if let Some(d) = d {
                        grads[v.0] = Some(d);
                    }
                }
            }
            Op::InstanceNorm { x, gamma, beta, xhat, inv_std } => {
                let (_, ch, len) = out.dims3().expect("rank 3");
                let gm = val(*gamma);
                if let Some(dg) = self.grad_slot(grads, *gamma) {
                    for (row, gr) in g.chunks(len).enumerate() {
                        let h = &xhat[row * len..(row + 1) * len];
                        dg[row % ch] += gr.iter().zip(h).map(|(&a, &b)| a * b).sum::<f32>();
                    }
                }
                if let Some(db) = self.grad_slot(grads, *beta) {
                    for (row, gr) in g.chunks(len).enumerate() {
                        db[row % ch] += gr.iter().sum::<f32>();
                    }
                }
                if let Some(dx) = self.grad_slot(grads, *x) {
                    let n = len as f32;
                    for (row, gr) in g.chunks(len).enumerate() {
                        let h = &xhat[row * len..(row + 1) * len];
                        let gamma_c = gm[row % ch];
                        let sum_g: f32 = gr.iter().sum::<f32>() * gamma_c;
                        let sum_gh: f32 = gr.iter().zip(h).map(|(&a, &b)| a * b).sum::<f32>() * gamma_c;
                        let is = inv_std[row];
                        for l in 0..len {
                            let dh = gr[l] * gamma_c;
                            dx[row * len + l] += is / n * (n * dh - sum_g - h[l] * sum_gh);
                        }
                    }
                }
            }
            Op::Tanh(x) => {
                if let Some(dx) = self.grad_slot(grads, *x) {
                    for ((d, &y), &gi) in dx.iter_mut().zip(out.data()).zip(g) {
                        *d += gi * (1.0 - y * y);
                    }
                }
            }
            Op::Sigmoid(x) => {
                if let Some(dx) = self.grad_slot(grads, *x) {
                    for ((d, &y), &gi) in dx.iter_mut().zip(out.data()).zip(g) {
                        *d += gi * y * (1.0 - y);
                    }
                }
            }
            Op::Dropout { x, mask } => {
                if let Some(dx) = self.grad_slot(grads, *x) {
                    for ((d, &m), &gi) in dx.iter_mut().zip(mask).zip(g) {
                        *d += gi * m;
                    }
                }
            }
            Op::AvgPool(x) => {
                let (_, _, len) = self.value(*x).dims3().expect("rank 3");
                if let Some(dx) = self.grad_slot(grads, *x) {
                    for (row, &gi) in g.iter().enumerate() {
                        for d in &mut dx[row * len..(row + 1) * len] {
                            *d += gi / len as f32;
                        }
                    }
                }
            }
            Op::Linear { x, w, b } => {
                let (batch, feat) = self.value(*x).items();
                let outs = self.value(*w).shape()[0];
                let wv = val(*w);
                let xv = val(*x);
                if let Some(dx) = self.grad_slot(grads, *x) {
                    gemm(batch, outs, feat, Mat::rows(g, outs), Mat::rows(wv, feat), 1.0, dx);
                }
                if let Some(dw) = self.grad_slot(grads, *w) {
                    gemm(outs, batch, feat, Mat::transposed(g, outs), Mat::rows(xv, feat), 1.0, dw);
                }
                if let Some(db) = self.grad_slot(grads, *b) {
                    for row in g.chunks(outs) {
                        for (d, &gi) in db.iter_mut().zip(row) {
                            *d += gi;
                        }
                    }
                }
            }
            Op::Concat { a, b } => {
                let (batch, ca, len) = self.value(*a).dims3().expect("rank 3");
                let cb = self.value(*b).dims3().expect("rank 3").1;
                let (sa, sb) = (ca * len, cb * len);
                if let Some(da) = self.grad_slot(grads, *a) {
                    for i in 0..batch {
                        for (d, &gi) in da[i * sa..(i + 1) * sa].iter_mut().zip(&g[i * (sa + sb)..i * (sa + sb) + sa]) {
                            *d += gi;
                        }
                    }
                }
                if let Some(db) = self.grad_slot(grads, *b) {
                    for i in 0..batch {
                        let src = &g[i * (sa + sb) + sa..(i + 1) * (sa + sb)];
                        for (d, &gi) in db[i * sb..(i + 1) * sb].iter_mut().zip(src) {
                            *d += gi;
                        }
                    }
                }
            }
            Op::Add(a, b) => {
                for v in [*a, *b] {
                    if let Some(d) = self.grad_slot(grads, v) {
                        for (d, &gi) in d.iter_mut().zip(g) {
                            *d += gi;
                        }
                    }
                }
            }
            Op::Sub(a, b) => {
                if let Some(d) = self.grad_slot(grads, *a) {
                    for (d, &gi) in d.iter_mut().zip(g) {
                        *d += gi;
                    }
                }
                if let Some(d) = self.grad_slot(grads, *b) {
                    for (d, &gi) in d.iter_mut().zip(g) {
                        *d -= gi;
                    }
                }
            }
            Op::Mul(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                if let Some(d) = self.grad_slot(grads, *a) {
                    for ((d, &gi), &o) in d.iter_mut().zip(g).zip(bv) {
                        *d += gi * o;
                    }
                }
                if let Some(d) = self.grad_slot(grads, *b) {
                    for ((d, &gi), &o) in d.iter_mut().zip(g).zip(av) {
                        *d += gi * o;
                    }
                }
            }
            Op::Scale(x, f) => {
                if let Some(dx) = self.grad_slot(grads, *x) {
                    for (d, &gi) in dx.iter_mut().zip(g) {
                        *d += gi * f;
                    }
                }
            }
            Op::Power { x, q } => {
                let xv = val(*x);
                if let Some(dx) = self.grad_slot(grads, *x) {
                    for ((d, &gi), &v) in dx.iter_mut().zip(g).zip(xv) {
                        let dp = (1..*q).fold(*q as f32, |acc, _| acc * v);
                        *d += gi * dp;
                    }
                }
            }
            Op::MeanAll(x) => {
                if let Some(dx) = self.grad_slot(grads, *x) {
                    let s = g[0] / dx.len() as f32;
                    for d in dx.iter_mut() {
                        *d += s;
                    }
                }
            }
            Op::MeanItems(x) => {
                let (_, per) = self.value(*x).items();
                if let Some(dx) = self.grad_slot(grads, *x) {
                    for (row, &gi) in g.iter().enumerate() {
                        for d in &mut dx[row * per..(row + 1) * per] {
                            *d += gi / per as f32;
                        }
                    }
                }
            }
            Op::ClampMin { x, min } => {
                let xv = val(*x);
                if let Some(dx) = self.grad_slot(grads, *x) {
                    for ((d, &gi), &v) in dx.iter_mut().zip(g).zip(xv) {
                        if v > *min {
                            *d += gi;
                        }
                    }
                }
            }
            Op::Log10(x) => {
                let xv = val(*x);
                if let Some(dx) = self.grad_slot(grads, *x) {
                    for ((d, &gi), &v) in dx.iter_mut().zip(g).zip(xv) {
                        *d += gi / (v * core::f32::consts::LN_10);
                    }
                }
            }
            Op::Stft { x, plan, parts } => {
                let batch = out.shape()[0];
                if let Some(dx) = self.grad_slot(grads, *x) {
                    plan.backward(parts, out.data(), g, batch, dx);
                }
            }
        }
    }
}

fn op_name(op: &Op) -> &'static str {
    match op {
        Op::Leaf => "leaf",
        Op::Conv { .. } => "conv",
        Op::InstanceNorm { .. } => "instance_norm",
        Op::Tanh(_) => "tanh",
        Op::Sigmoid(_) => "sigmoid",
        Op::Dropout { .. } => "dropout",
        Op::AvgPool(_) => "adaptive_avg_pool1d",
        Op::Linear { .. } => "linear",
        Op::Concat { .. } => "concat",
        Op::Add(..) => "add",
        Op::Sub(..) => "sub",
        Op::Mul(..) => "mul",
        Op::Scale(..) => "scale",
        Op::Power { .. } => "power",
        Op::MeanAll(_) => "mean_all",
        Op::MeanItems(_) => "mean_items",
        Op::ClampMin { .. } => "clamp_min",
        Op::Log10(_) => "log10",
        Op::Stft { .. } => "spectrogram",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_gradient_is_uniform() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::new(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap(), true);
        let m = t.mean_all(x);
        let g = t.backward(m).unwrap();
        assert_eq!(g.get(x).unwrap(), &[0.25; 4]);
    }

    #[test]
    fn mse_to_zero_gradient() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::new(&[1], vec![3.0]).unwrap(), true);
        let zero = t.constant(Tensor::zeros(&[1]));
        let d = t.sub(x, zero).unwrap();
        let sq = t.square(d);
        let loss = t.mean_all(sq);
        let g = t.backward(loss).unwrap();
        assert_eq!(g.get(x).unwrap(), &[6.0]);
        assert!(g.get(zero).is_none());
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::zeros(&[3]), true);
        assert!(matches!(t.backward(x), Err(Error::Contract(_))));
    }

    #[test]
    fn dropout_eval_is_identity() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::new(&[1, 1, 4], vec![1.0, -2.0, 3.0, 0.5]).unwrap(), true);
        let y = t.dropout(x, 0.25, false, 9).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn dropout_train_scales_survivors() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::full(&[1, 1, 4000], 1.0), true);
        let y = t.dropout(x, 0.25, true, 9).unwrap();
        let v = t.value(y).data();
        assert!(v.iter().all(|&e| e == 0.0 || (e - 1.0 / 0.75).abs() < 1e-6));
        let kept = v.iter().filter(|&&e| e > 0.0).count() as f32 / 4000.0;
        assert!((kept - 0.75).abs() < 0.03, "{kept}");
    }

    #[test]
    fn avg_pool_mean() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::new(&[1, 1, 4], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let y = t.adaptive_avg_pool1d(x).unwrap();
        assert_eq!(t.value(y).data(), &[2.5]);
    }

    #[test]
    fn tconv_output_length() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::zeros(&[1, 1, 8]));
        let w = t.constant(Tensor::zeros(&[3, 1, 1, 3]));
        let b = t.constant(Tensor::zeros(&[1]));
        let y = t.selfonn_tconv1d(x, w, b, 2, 1, 0).unwrap();
        assert_eq!(t.value(y).shape(), &[1, 1, 15]);
        let y = t.selfonn_tconv1d(x, w, b, 2, 1, 1).unwrap();
        assert_eq!(t.value(y).shape(), &[1, 1, 16]);
    }

    #[test]
    fn zero_input_gives_bias() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::zeros(&[2, 2, 16]));
        let w = t.constant(Tensor::full(&[3, 3, 2, 3], 0.7));
        let b = t.constant(Tensor::new(&[3], vec![0.1, -0.2, 0.3]).unwrap());
        let y = t.selfonn_conv1d(x, w, b, 1, 1).unwrap();
        for (k, row) in t.value(y).data().chunks(16).enumerate() {
            assert!(row.iter().all(|&v| v == [0.1, -0.2, 0.3][k % 3]));
        }
    }

    #[test]
    fn conv_rejects_channel_mismatch() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::zeros(&[1, 2, 16]));
        let w = t.constant(Tensor::zeros(&[3, 4, 3, 3]));
        let b = t.constant(Tensor::zeros(&[4]));
        assert!(matches!(t.selfonn_conv1d(x, w, b, 1, 1), Err(Error::Dimension(_))));
    }

    #[test]
    fn instance_norm_rejects_short_length() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::zeros(&[1, 1, 1]));
        let g = t.constant(Tensor::full(&[1], 1.0));
        let b = t.constant(Tensor::zeros(&[1]));
        assert!(t.instance_norm(x, g, b, 1e-5).is_err());
    }

    #[test]
    fn instance_norm_constant_channel_is_zero() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::full(&[1, 1, 8], 3.0));
        let g = t.constant(Tensor::full(&[1], 1.0));
        let b = t.constant(Tensor::zeros(&[1]));
        let y = t.instance_norm(x, g, b, 1e-5).unwrap();
        assert!(t.value(y).data().iter().all(|&v| v == 0.0));
    }
}
