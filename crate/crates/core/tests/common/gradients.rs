use super::*;
use corenet_core::autodiff::{Tape, Tensor};
use corenet_core::losses::{loss_apprentice, loss_master, psnr_items, y_res_labels, LossWeights};
use corenet_core::models::{self, ar_forward, BoundParams, Mode};
use corenet_core::spectrogram::SpectrogramConfig;
use corenet_oracle as oracle;
use corenet_oracle::Arr;

const H: f64 = 1e-6;
const TOL: f64 = 1e-4;
/// Denominator floors of the relative error. Whole-network checks
/// accumulate f32 rounding through ten blocks and use the larger one.
const FLOOR: f64 = 1e-3;
const NET_FLOOR: f64 = 1.0;

fn check(name: &str, analytic: &[f32], numeric: &[f64]) {
    check_with(name, analytic, numeric, FLOOR);
}

fn check_with(name: &str, analytic: &[f32], numeric: &[f64], floor: f64) {
    let e = max_rel(analytic, numeric, floor);
    assert!(e < TOL, "{name}: max relative error {e:e}");
}

pub fn selfonn_conv_gradients() {
    for (stride, pad, seed) in [(1, 1, 1), (2, 1, 2), (2, 0, 3)] {
        let mut r = rng(seed);
        let (xt, wt, bt) = (tensor(&mut r, &[2, 3, 9], 1.0), tensor(&mut r, &[3, 4, 3, 3], 0.5), tensor(&mut r, &[4], 0.5));
        let mut tape = Tape::new();
        let (x, w, b) = (tape.leaf(xt.clone(), true), tape.leaf(wt.clone(), true), tape.leaf(bt.clone(), true));
        let y = tape.selfonn_conv1d(x, w, b, stride, pad).unwrap();
        let c = uniform(&mut r, tape.value(y).numel(), 1.0);
        let loss = project(&mut tape, y, &c);
        let g = tape.backward(loss).unwrap();

        let (xa, wa, ba) = (arr(&xt), f64s(wt.data()), f64s(bt.data()));
        let f = |x: &Arr, w: &[f64], b: &[f64]| dot(&oracle::selfonn_conv(x, w, b, 3, 4, 3, stride, pad).data, &c);
        let nx = numeric_grad(xt.data(), H, |v| f(&Arr::new(2, 3, 9, v.to_vec()), &wa, &ba));
        let nw = numeric_grad(wt.data(), H, |v| f(&xa, v, &ba));
        let nb = numeric_grad(bt.data(), H, |v| f(&xa, &wa, v));
        check("conv dx", g.get(x).unwrap(), &nx);
        check("conv dw", g.get(w).unwrap(), &nw);
        check("conv db", g.get(b).unwrap(), &nb);
    }
}

pub fn selfonn_tconv_gradients() {
    for (stride, pad, op, seed) in [(2, 1, 1, 4), (1, 1, 0, 5), (2, 0, 1, 6)] {
        let mut r = rng(seed);
        let (xt, wt, bt) = (tensor(&mut r, &[2, 3, 5], 1.0), tensor(&mut r, &[3, 2, 3, 3], 0.5), tensor(&mut r, &[2], 0.5));
        let mut tape = Tape::new();
        let (x, w, b) = (tape.leaf(xt.clone(), true), tape.leaf(wt.clone(), true), tape.leaf(bt.clone(), true));
        let y = tape.selfonn_tconv1d(x, w, b, stride, pad, op).unwrap();
        let c = uniform(&mut r, tape.value(y).numel(), 1.0);
        let loss = project(&mut tape, y, &c);
        let g = tape.backward(loss).unwrap();

        let (xa, wa, ba) = (arr(&xt), f64s(wt.data()), f64s(bt.data()));
        let f = |x: &Arr, w: &[f64], b: &[f64]| dot(&oracle::selfonn_tconv(x, w, b, 3, 2, 3, stride, pad, op).data, &c);
        let nx = numeric_grad(xt.data(), H, |v| f(&Arr::new(2, 3, 5, v.to_vec()), &wa, &ba));
        let nw = numeric_grad(wt.data(), H, |v| f(&xa, v, &ba));
        let nb = numeric_grad(bt.data(), H, |v| f(&xa, &wa, v));
        check("tconv dx", g.get(x).unwrap(), &nx);
        check("tconv dw", g.get(w).unwrap(), &nw);
        check("tconv db", g.get(b).unwrap(), &nb);
    }
}

pub fn instance_norm_gradients() {
    let mut r = rng(7);
    let (xt, gt, bt) = (tensor(&mut r, &[2, 3, 8], 1.0), tensor(&mut r, &[3], 1.0), tensor(&mut r, &[3], 1.0));
    let mut tape = Tape::new();
    let (x, gm, bb) = (tape.leaf(xt.clone(), true), tape.leaf(gt.clone(), true), tape.leaf(bt.clone(), true));
    let y = tape.instance_norm(x, gm, bb, 1e-5).unwrap();
    let c = uniform(&mut r, tape.value(y).numel(), 1.0);
    let loss = project(&mut tape, y, &c);
    let g = tape.backward(loss).unwrap();

    let (xa, ga, ba) = (arr(&xt), f64s(gt.data()), f64s(bt.data()));
    let f = |x: &Arr, g: &[f64], b: &[f64]| dot(&oracle::instance_norm(x, g, b, 1e-5).data, &c);
    check("norm dx", g.get(x).unwrap(), &numeric_grad(xt.data(), H, |v| f(&Arr::new(2, 3, 8, v.to_vec()), &ga, &ba)));
    check("norm dgamma", g.get(gm).unwrap(), &numeric_grad(gt.data(), H, |v| f(&xa, v, &ba)));
    check("norm dbeta", g.get(bb).unwrap(), &numeric_grad(bt.data(), H, |v| f(&xa, &ga, v)));
}

/// Elementwise op on a `[2, 3, 5]` input against an f64 map.
fn elementwise(name: &str, seed: u64, lo: f32, hi: f32, op: impl Fn(&mut Tape, corenet_core::autodiff::Var) -> corenet_core::autodiff::Var, f: impl Fn(f64) -> f64) {
    let mut r = rng(seed);
    let xt = Tensor::new(&[2, 3, 5], (0..30).map(|_| rand::Rng::random_range(&mut r, lo..hi)).collect()).unwrap();
    let mut tape = Tape::new();
    let x = tape.leaf(xt.clone(), true);
    let y = op(&mut tape, x);
    let c = uniform(&mut r, 30, 1.0);
    let loss = project(&mut tape, y, &c);
    let g = tape.backward(loss).unwrap();
    let n = numeric_grad(xt.data(), H, |v| dot(&v.iter().map(|&e| f(e)).collect::<Vec<_>>(), &c));
    check(name, g.get(x).unwrap(), &n);
}

pub fn elementwise_gradients() {
    elementwise("tanh", 10, -2.0, 2.0, |t, x| t.tanh(x), f64::tanh);
    elementwise("sigmoid", 11, -3.0, 3.0, |t, x| t.sigmoid(x), oracle::sigmoid);
    elementwise("power3", 12, -1.0, 1.0, |t, x| t.power(x, 3), |v| v.powi(3));
    elementwise("square", 13, -1.0, 1.0, |t, x| t.square(x), |v| v * v);
    elementwise("scale", 14, -1.0, 1.0, |t, x| t.scale(x, -2.5), |v| -2.5 * v);
    elementwise("log10", 15, 0.5, 2.0, |t, x| t.log10(x), f64::log10);
    elementwise("clamp_min", 16, -1.0, 1.0, |t, x| t.clamp_min(x, 0.1), |v| v.max(0.1));
    elementwise("dropout_eval", 17, -1.0, 1.0, |t, x| t.dropout(x, 0.25, false, 3).unwrap(), |v| v);
}

pub fn dropout_train_gradient_is_mask() {
    let mut r = rng(18);
    let xt = tensor(&mut r, &[2, 3, 50], 1.0);
    let mut tape = Tape::new();
    let x = tape.leaf(xt.clone(), true);
    let y = tape.dropout(x, 0.25, true, 99).unwrap();
    let mask: Vec<f64> = tape.value(y).data().iter().zip(xt.data()).map(|(&a, &b)| a as f64 / b as f64).collect();
    let c = uniform(&mut r, 300, 1.0);
    let loss = project(&mut tape, y, &c);
    let g = tape.backward(loss).unwrap();
    let n = numeric_grad(xt.data(), H, |v| dot(&v.iter().zip(&mask).map(|(a, m)| a * m).collect::<Vec<_>>(), &c));
    check("dropout_train", g.get(x).unwrap(), &n);
}

pub fn binary_and_structural_gradients() {
    let mut r = rng(20);
    let (at, bt) = (tensor(&mut r, &[2, 3, 4], 1.0), tensor(&mut r, &[2, 2, 4], 1.0));
    let ct = tensor(&mut r, &[2, 3, 4], 1.0);
    let mut tape = Tape::new();
    let (a, b, cc) = (tape.leaf(at.clone(), true), tape.leaf(bt.clone(), true), tape.leaf(ct.clone(), true));
    // ((a·c − a) + c) ‖ b, then per-item means
    let m = tape.mul(a, cc).unwrap();
    let s = tape.sub(m, a).unwrap();
    let s = tape.add(s, cc).unwrap();
    let cat = tape.concat_channels(s, b).unwrap();
    let items = tape.mean_items(cat);
    let proj = uniform(&mut r, 2, 1.0);
    let loss = project(&mut tape, items, &proj);
    let g = tape.backward(loss).unwrap();

    let f = |a: &[f64], b: &[f64], c: &[f64]| -> f64 {
        (0..2)
            .map(|i| {
                let s: f64 = (0..12).map(|k| a[i * 12 + k] * c[i * 12 + k] - a[i * 12 + k] + c[i * 12 + k]).sum();
                let t: f64 = b[i * 8..(i + 1) * 8].iter().sum();
                proj[i] as f64 * (s + t) / 20.0
            })
            .sum()
    };
    let (aa, ba, ca) = (f64s(at.data()), f64s(bt.data()), f64s(ct.data()));
    check("a", g.get(a).unwrap(), &numeric_grad(at.data(), H, |v| f(v, &ba, &ca)));
    check("b", g.get(b).unwrap(), &numeric_grad(bt.data(), H, |v| f(&aa, v, &ca)));
    check("c", g.get(cc).unwrap(), &numeric_grad(ct.data(), H, |v| f(&aa, &ba, v)));
}

pub fn pool_and_linear_gradients() {
    let mut r = rng(21);
    let (xt, wt, bt) = (tensor(&mut r, &[3, 4, 6], 1.0), tensor(&mut r, &[2, 4], 1.0), tensor(&mut r, &[2], 1.0));
    let mut tape = Tape::new();
    let (x, w, b) = (tape.leaf(xt.clone(), true), tape.leaf(wt.clone(), true), tape.leaf(bt.clone(), true));
    let p = tape.adaptive_avg_pool1d(x).unwrap();
    let y = tape.linear(p, w, b).unwrap();
    let c = uniform(&mut r, 6, 1.0);
    let loss = project(&mut tape, y, &c);
    let g = tape.backward(loss).unwrap();

    let f = |x: &Arr, w: &[f64], b: &[f64]| {
        let out: Vec<f64> = oracle::avg_pool(x).iter().flat_map(|f| oracle::linear(f, w, b)).collect();
        dot(&out, &c)
    };
    let (xa, wa, ba) = (arr(&xt), f64s(wt.data()), f64s(bt.data()));
    check("pool dx", g.get(x).unwrap(), &numeric_grad(xt.data(), H, |v| f(&Arr::new(3, 4, 6, v.to_vec()), &wa, &ba)));
    check("linear dw", g.get(w).unwrap(), &numeric_grad(wt.data(), H, |v| f(&xa, v, &ba)));
    check("linear db", g.get(b).unwrap(), &numeric_grad(bt.data(), H, |v| f(&xa, &wa, v)));
}

pub fn spectrogram_gradient() {
    let mut r = rng(22);
    let cfg = SpectrogramConfig { window_length: 16, hop: 4 };
    let xt = tensor(&mut r, &[2, 2, 40], 1.0);
    let mut tape = Tape::new();
    let x = tape.leaf(xt.clone(), true);
    let y = tape.spectrogram(x, cfg).unwrap();
    let c = uniform(&mut r, tape.value(y).numel(), 1.0);
    let loss = project(&mut tape, y, &c);
    let g = tape.backward(loss).unwrap();
    let n = numeric_grad(xt.data(), H, |v| {
        let a = Arr::new(2, 2, 40, v.to_vec());
        dot(&oracle::spectrograms(&a, 16, 4).concat(), &c)
    });
    check("stft", g.get(x).unwrap(), &n);
}

pub fn time_and_frequency_loss_gradients_on_length_32() {
    let mut r = rng(23);
    let cfg = SpectrogramConfig { window_length: 16, hop: 4 };
    let st = tensor(&mut r, &[2, 2, 32], 1.0);
    let ht = tensor(&mut r, &[2, 2, 32], 1.0);
    for freq in [false, true] {
        let mut tape = Tape::new();
        let s = tape.constant(st.clone());
        let h = tape.leaf(ht.clone(), true);
        let (a, b) = if freq {
            (tape.spectrogram(s, cfg).unwrap(), tape.spectrogram(h, cfg).unwrap())
        } else {
            (s, h)
        };
        let p = psnr_items(&mut tape, a, b).unwrap();
        let m = tape.mean_all(p);
        let loss = tape.scale(m, -1.0);
        let g = tape.backward(loss).unwrap();
        let sa = arr(&st);
        let n = numeric_grad(ht.data(), H, |v| {
            let ha = Arr::new(2, 2, 32, v.to_vec());
            let terms: Vec<f64> = if freq {
                let (x, y) = (oracle::spectrograms(&sa, 16, 4), oracle::spectrograms(&ha, 16, 4));
                x.iter().zip(&y).map(|(p, q)| oracle::psnr(p, q)).collect()
            } else {
                (0..2).map(|b| oracle::psnr(sa.item(b), ha.item(b))).collect()
            };
            -terms.iter().sum::<f64>() / 2.0
        });
        check(if freq { "L_freq" } else { "L_time" }, g.get(h).unwrap(), &n);
    }
}

struct Nets {
    ar_cfg: models::ArConfig,
    mr_cfg: models::MrConfig,
    ar: models::ParamStore,
    mr: models::ParamStore,
    ar_net: oracle::Net,
    mr_net: oracle::Net,
}

fn small_nets(len: usize, seed: u64) -> Nets {
    let mut ar_cfg = models::ArConfig::uniform(4);
    ar_cfg.segment_len = len;
    let mut mr_cfg = models::MrConfig::uniform(3);
    mr_cfg.segment_len = len;
    let mut ar = models::init_ar(&ar_cfg, seed).unwrap();
    let mut mr = models::init_mr(&mr_cfg, seed).unwrap();
    // Move norms and biases off their trivial initial values.
    let mut r = rng(seed ^ 0xabc);
    for t in ar.tensors_mut().chain(mr.tensors_mut()) {
        for v in t.data_mut() {
            *v += rand::Rng::random_range(&mut r, -0.1f32..0.1);
        }
    }
    let net = |w: &[usize]| oracle::Net { widths: w.to_vec(), q_order: 3, kernel: 3, eps: 1e-5 };
    let ar_net = net(&ar_cfg.encoder_widths);
    let mr_net = net(&mr_cfg.widths);
    Nets { ar_cfg, mr_cfg, ar, mr, ar_net, mr_net }
}

fn param_lists(store: &models::ParamStore) -> Vec<Vec<f64>> {
    store.tensors().map(|t| f64s(t.data())).collect()
}

fn signals(r: &mut rand_chacha::ChaCha8Rng, len: usize) -> (Tensor, Tensor, Tensor) {
    let s = tensor(r, &[2, 2, len], 1.0);
    let noisy = Tensor::new(&[2, 2, len], s.data().iter().map(|&v| (v + rand::Rng::random_range(r, -0.4f32..0.4)).clamp(-1.0, 1.0)).collect()).unwrap();
    let hat = Tensor::new(&[2, 2, len], s.data().iter().map(|&v| 0.8 * v + rand::Rng::random_range(r, -0.1f32..0.1)).collect()).unwrap();
    (s, noisy, hat)
}

pub fn apprentice_loss_gradient_wrt_restoration() {
    let len = 128;
    let nets = small_nets(len, 31);
    let mut r = rng(32);
    let (st, rt, ht) = signals(&mut r, len);
    let weights = LossWeights::default();
    let spec = SpectrogramConfig::default();
    let mut tape = Tape::new();
    let (rv, sv) = (tape.constant(rt.clone()), tape.constant(st.clone()));
    let h = tape.leaf(ht.clone(), true);
    let mrp = BoundParams::bind(&mut tape, &nets.mr, false);
    let la = loss_apprentice(&mut tape, rv, sv, h, &nets.mr_cfg, &mrp, &weights, spec).unwrap();

    let (ra, sa) = (arr(&rt), arr(&st));
    let mrl = param_lists(&nets.mr);
    let w = oracle::Weights { epsilon: 1.0, beta: 10.0, phi: 1.0 };
    let full = oracle::loss_apprentice(&ra, &sa, &arr(&ht), &nets.mr_net, &mrl, w, 64, 16);
    let vals = [la.total, la.fidelity, la.time, la.freq].map(|v| tape.value(v).data()[0] as f64);
    for (got, want) in vals.iter().zip([full.0, full.1, full.2, full.3]) {
        assert!((got - want).abs() <= 1e-4 * want.abs().max(1.0), "{got} vs {want}");
    }
    let g = tape.backward(la.total).unwrap();
    for v in mrp.vars() {
        assert!(g.get(*v).is_none());
    }
    let n = numeric_grad(ht.data(), H, |v| {
        oracle::loss_apprentice(&ra, &sa, &Arr::new(2, 2, len, v.to_vec()), &nets.mr_net, &mrl, w, 64, 16).0
    });
    check_with("L_A d s_hat", g.get(h).unwrap(), &n, NET_FLOOR);
}

pub fn fidelity_term_gradient_wrt_restoration() {
    let len = 128;
    let nets = small_nets(len, 33);
    let mut r = rng(34);
    let (st, rt, ht) = signals(&mut r, len);
    let mut tape = Tape::new();
    let (rv, sv) = (tape.constant(rt.clone()), tape.constant(st.clone()));
    let h = tape.leaf(ht.clone(), true);
    let mrp = BoundParams::bind(&mut tape, &nets.mr, false);
    let la =
        loss_apprentice(&mut tape, rv, sv, h, &nets.mr_cfg, &mrp, &LossWeights::default(), SpectrogramConfig::default())
            .unwrap();
    let g = tape.backward(la.fidelity).unwrap();
    let (ra, sa) = (arr(&rt), arr(&st));
    let mrl = param_lists(&nets.mr);
    let w = oracle::Weights { epsilon: 1.0, beta: 10.0, phi: 1.0 };
    let n = numeric_grad(ht.data(), H, |v| {
        oracle::loss_apprentice(&ra, &sa, &Arr::new(2, 2, len, v.to_vec()), &nets.mr_net, &mrl, w, 64, 16).1
    });
    check_with("L_fid d s_hat", g.get(h).unwrap(), &n, NET_FLOOR);
}

pub fn master_loss_gradient_wrt_every_master_parameter() {
    let len = 128;
    let nets = small_nets(len, 35);
    let mut r = rng(36);
    let (st, rt, ht) = signals(&mut r, len);
    let mut tape = Tape::new();
    let (rv, sv, hv) = (tape.constant(rt.clone()), tape.constant(st.clone()), tape.constant(ht.clone()));
    let mrp = BoundParams::bind(&mut tape, &nets.mr, true);
    let lm = loss_master(&mut tape, rv, sv, hv, &nets.mr_cfg, &mrp, 40.0, Mode::Eval).unwrap();
    let labels: Vec<f64> = f64s(&y_res_labels(&st, &ht, 40.0).unwrap());
    let (ra, sa, ha) = (arr(&rt), arr(&st), arr(&ht));
    let mut lists = param_lists(&nets.mr);
    let want = oracle::loss_master(&ra, &sa, &ha, &labels, &nets.mr_net, &lists);
    assert!((tape.value(lm).data()[0] as f64 - want).abs() < 1e-5);
    let g = tape.backward(lm).unwrap();
    for (k, v) in mrp.vars().iter().enumerate() {
        let analytic = g.get(*v).unwrap().to_vec();
        let mut x = lists[k].clone();
        let numeric: Vec<f64> = (0..x.len())
            .map(|i| {
                oracle::central_diff(&mut x, i, H, |p| {
                    lists[k] = p.to_vec();
                    oracle::loss_master(&ra, &sa, &ha, &labels, &nets.mr_net, &lists)
                })
            })
            .collect();
        lists[k] = x;
        check_with(&format!("L_M d{}", nets.mr.iter().nth(k).unwrap().0), &analytic, &numeric, NET_FLOOR);
    }
}

pub fn apprentice_loss_gradient_wrt_apprentice_parameters() {
    let len = 128;
    let nets = small_nets(len, 37);
    let mut r = rng(38);
    let (st, rt, _) = signals(&mut r, len);
    let mut tape = Tape::new();
    let (rv, sv) = (tape.constant(rt.clone()), tape.constant(st.clone()));
    let arp = BoundParams::bind(&mut tape, &nets.ar, true);
    let mrp = BoundParams::bind(&mut tape, &nets.mr, false);
    let h = ar_forward(&mut tape, &nets.ar_cfg, &arp, rv, Mode::Eval).unwrap();
    let ar_lists = param_lists(&nets.ar);
    let ra = arr(&rt);
    let want = oracle::ar_forward(&ra, &nets.ar_net, 2, &ar_lists);
    for (a, b) in tape.value(h).data().iter().zip(&want.data) {
        assert!((*a as f64 - b).abs() < 1e-5);
    }
    let la =
        loss_apprentice(&mut tape, rv, sv, h, &nets.mr_cfg, &mrp, &LossWeights::default(), SpectrogramConfig::default())
            .unwrap();
    let g = tape.backward(la.total).unwrap();

    let sa = arr(&st);
    let mrl = param_lists(&nets.mr);
    let w = oracle::Weights { epsilon: 1.0, beta: 10.0, phi: 1.0 };
    let mut lists = ar_lists;
    let mut pick = rng(39);
    for (k, v) in arp.vars().iter().enumerate() {
        let analytic = g.get(*v).unwrap();
        let idx: Vec<usize> = (0..3).map(|_| rand::Rng::random_range(&mut pick, 0..lists[k].len())).collect();
        let mut x = lists[k].clone();
        let numeric: Vec<f64> = idx
            .iter()
            .map(|&i| {
                oracle::central_diff(&mut x, i, H, |p| {
                    lists[k] = p.to_vec();
                    let hat = oracle::ar_forward(&ra, &nets.ar_net, 2, &lists);
                    oracle::loss_apprentice(&ra, &sa, &hat, &nets.mr_net, &mrl, w, 64, 16).0
                })
            })
            .collect();
        lists[k] = x;
        let picked: Vec<f32> = idx.iter().map(|&i| analytic[i]).collect();
        check_with(&format!("L_A d{}", nets.ar.iter().nth(k).unwrap().0), &picked, &numeric, NET_FLOOR);
    }
}

/// Every check, by name.
pub const CASES: &[(&str, fn())] = &[
    ("selfonn_conv_gradients", selfonn_conv_gradients),
    ("selfonn_tconv_gradients", selfonn_tconv_gradients),
    ("instance_norm_gradients", instance_norm_gradients),
    ("elementwise_gradients", elementwise_gradients),
    ("dropout_train_gradient_is_mask", dropout_train_gradient_is_mask),
    ("binary_and_structural_gradients", binary_and_structural_gradients),
    ("pool_and_linear_gradients", pool_and_linear_gradients),
    ("spectrogram_gradient", spectrogram_gradient),
    ("time_and_frequency_loss_gradients_on_length_32", time_and_frequency_loss_gradients_on_length_32),
    ("apprentice_loss_gradient_wrt_restoration", apprentice_loss_gradient_wrt_restoration),
    ("fidelity_term_gradient_wrt_restoration", fidelity_term_gradient_wrt_restoration),
    ("master_loss_gradient_wrt_every_master_parameter", master_loss_gradient_wrt_every_master_parameter),
    ("apprentice_loss_gradient_wrt_apprentice_parameters", apprentice_loss_gradient_wrt_apprentice_parameters),
];
