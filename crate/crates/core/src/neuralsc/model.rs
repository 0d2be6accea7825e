use std::collections::BTreeMap;

use num_complex::Complex64;

use super::layers::{
    add_into, bn_backward, bn_eval, bn_train, elu, elu_backward, elu_vec, gap_backward, gap_forward, linear_backward,
    linear_forward, BnCache, Conv2d,
};
use super::{Arch, Tensor};
use crate::error::{Error, Result};
use crate::numerics::{ComplexMatrix, RngStream};

/// Momentum of every running statistic (batch norm and power normalization).
pub(crate) const RUNNING_MOMENTUM: f64 = 0.99;

/// Guards the power normalization against an all-zero batch.
const POWER_FLOOR: f64 = 1e-12;

const POWER_RMS: &str = "enc.power.rms";

/// Per-parameter gradient, keyed like [`ModelParams::params`].
pub type Gradients = BTreeMap<String, Vec<f64>>;

/// New values for running statistics produced by a training-mode forward pass.
pub(crate) type Updates = Vec<(String, Vec<f64>)>;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Mode {
    Train,
    Eval,
}

/// Adam moments, one entry per trainable tensor.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: BTreeMap<String, Vec<f64>>,
    pub v: BTreeMap<String, Vec<f64>>,
}

#[derive(Clone, Debug)]
struct BlockLayout {
    c: usize,
    dws: Vec<Conv2d>,
    pws: Vec<Conv2d>,
    c1: Conv2d,
    c2: Conv2d,
}

impl BlockLayout {
    fn out_spatial(&self) -> usize {
        self.c2.out_h * self.c2.out_w
    }
}

fn encoder_layout(arch: &Arch) -> Vec<BlockLayout> {
    let nk = arch.kernel_sizes.len();
    let mut cin = 2;
    let mut h = arch.m;
    let mut out = Vec::new();
    for &c in &arch.block_channels {
        let dws = arch.kernel_sizes.iter().map(|&k| Conv2d::same(cin, cin, k, 1, cin, h, h)).collect();
        let pws = arch.kernel_sizes.iter().map(|_| Conv2d::same(cin, c, 1, 1, 1, h, h)).collect();
        let c1 = Conv2d::same(nk * c, c, 1, 1, 1, h, h);
        let c2 = Conv2d::same(c, c, 3, 2, 1, h, h);
        h = c2.out_h;
        cin = c;
        out.push(BlockLayout { c, dws, pws, c1, c2 });
    }
    out
}

/// `(input width, output width, has projection)` per residual block.
fn decoder_layout(arch: &Arch) -> Vec<(usize, usize, bool)> {
    let mut inp = 2 * arch.symbols;
    arch.residual_widths
        .iter()
        .map(|&w| {
            let r = (inp, w, inp != w);
            inp = w;
            r
        })
        .collect()
}

fn enc(i: usize, rest: &str) -> String {
    format!("enc.{i}.{rest}")
}

fn dec(i: usize, rest: &str) -> String {
    format!("dec.{i}.{rest}")
}

/// Every trainable tensor as `(name, shape, fan_in, fan_out)`; biases and
/// batch-norm shifts have fan 0 and start at zero, batch-norm scales at one.
fn param_specs(arch: &Arch) -> Vec<(String, Vec<usize>, usize, usize)> {
    let mut specs = Vec::new();
    for (i, lay) in encoder_layout(arch).iter().enumerate() {
        for (j, (dw, pw)) in lay.dws.iter().zip(&lay.pws).enumerate() {
            specs.push((enc(i, &format!("br{j}.dw.w")), dw.weight_shape(), dw.fan_in(), dw.fan_out()));
            specs.push((enc(i, &format!("br{j}.pw.w")), pw.weight_shape(), pw.fan_in(), pw.fan_out()));
            specs.push((enc(i, &format!("br{j}.pw.b")), vec![pw.cout], 0, 0));
        }
        for (tag, conv) in [("c1", &lay.c1), ("c2", &lay.c2)] {
            specs.push((enc(i, &format!("{tag}.w")), conv.weight_shape(), conv.fan_in(), conv.fan_out()));
            specs.push((enc(i, &format!("{tag}.b")), vec![conv.cout], 0, 0));
        }
        specs.push((enc(i, "bn.gamma"), vec![lay.c], 0, 0));
        specs.push((enc(i, "bn.beta"), vec![lay.c], 0, 0));
    }
    let layout = decoder_layout(arch);
    for (i, &(inp, w, proj)) in layout.iter().enumerate() {
        for (tag, fi) in [("l1", inp), ("l2", w), ("l3", w)] {
            specs.push((dec(i, &format!("{tag}.w")), vec![w, fi], fi, w));
            specs.push((dec(i, &format!("{tag}.b")), vec![w], 0, 0));
        }
        if proj {
            specs.push((dec(i, "proj.w"), vec![w, inp], inp, w));
        }
        specs.push((dec(i, "bn.gamma"), vec![w], 0, 0));
        specs.push((dec(i, "bn.beta"), vec![w], 0, 0));
    }
    let last = layout.last().map_or(2 * arch.symbols, |l| l.1);
    specs.push(("dec.out.w".to_string(), vec![1, last], last, 1));
    specs.push(("dec.out.b".to_string(), vec![1], 0, 0));
    specs
}

fn buffer_specs(arch: &Arch) -> Vec<(String, Vec<usize>, f64)> {
    let mut specs = Vec::new();
    for (i, &c) in arch.block_channels.iter().enumerate() {
        specs.push((enc(i, "bn.mean"), vec![c], 0.0));
        specs.push((enc(i, "bn.var"), vec![c], 1.0));
    }
    specs.push((POWER_RMS.to_string(), vec![], 1.0));
    for (i, &w) in arch.residual_widths.iter().enumerate() {
        specs.push((dec(i, "bn.mean"), vec![w], 0.0));
        specs.push((dec(i, "bn.var"), vec![w], 1.0));
    }
    specs
}

/// Encoder input: the real plane followed by the imaginary plane.
pub fn covariance_to_input(r: &ComplexMatrix) -> Vec<f64> {
    let mut x: Vec<f64> = r.as_slice().iter().map(|z| z.re).collect();
    x.extend(r.as_slice().iter().map(|z| z.im));
    x
}

fn check_finite(layer: impl FnOnce() -> String, v: &[f64]) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { layer: layer() })
    }
}

fn blend(old: &[f64], new: &[f64]) -> Vec<f64> {
    old.iter().zip(new).map(|(o, n)| RUNNING_MOMENTUM * o + (1.0 - RUNNING_MOMENTUM) * n).collect()
}

pub(crate) struct BlockCache {
    input: Vec<f64>,
    dw_out: Vec<Vec<f64>>,
    pw_pre: Vec<Vec<f64>>,
    concat: Vec<f64>,
    c1_pre: Vec<f64>,
    c1_out: Vec<f64>,
    c2_pre: Vec<f64>,
    bn: Option<BnCache>,
}

pub(crate) struct EncoderCache {
    blocks: Vec<BlockCache>,
    gap: Vec<f64>,
    scale: f64,
}

pub(crate) struct ResCache {
    x: Vec<f64>,
    a_pre: Vec<f64>,
    a: Vec<f64>,
    b_pre: Vec<f64>,
    b: Vec<f64>,
    c_pre: Vec<f64>,
    bn: Option<BnCache>,
}

pub(crate) struct DecoderCache {
    blocks: Vec<ResCache>,
    last: Vec<f64>,
}

/// Transceiver weights, running statistics and optimizer state.
#[derive(Clone, Debug)]
pub struct ModelParams {
    arch: Arch,
    params: BTreeMap<String, Tensor>,
    buffers: BTreeMap<String, Tensor>,
    optimizer: AdamState,
    layout: Vec<BlockLayout>,
}

impl PartialEq for ModelParams {
    fn eq(&self, other: &Self) -> bool {
        self.arch == other.arch
            && self.params == other.params
            && self.buffers == other.buffers
            && self.optimizer == other.optimizer
    }
}

impl ModelParams {
    /// Glorot-uniform weights, zero biases, unit batch-norm scales.
    pub fn init(arch: &Arch, stream: &mut RngStream) -> Result<Self> {
        arch.validate()?;
        let mut params = BTreeMap::new();
        for (name, shape, fan_in, fan_out) in param_specs(arch) {
            let t = if fan_in > 0 {
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let len = shape.iter().product();
                let data = (0..len).map(|_| (2.0 * stream.uniform() - 1.0) * limit).collect();
                Tensor::new(shape, data)?
            } else if name.ends_with("gamma") {
                Tensor::filled(shape, 1.0)
            } else {
                Tensor::zeros(shape)
            };
            params.insert(name, t);
        }
        let buffers = buffer_specs(arch).into_iter().map(|(n, s, v)| (n, Tensor::filled(s, v))).collect();
        Ok(Self { arch: arch.clone(), params, buffers, optimizer: AdamState::default(), layout: encoder_layout(arch) })
    }

    /// Assembles a model from stored tensors, checking names and shapes against `arch`.
    pub fn from_parts(
        arch: Arch,
        params: BTreeMap<String, Tensor>,
        buffers: BTreeMap<String, Tensor>,
        optimizer: AdamState,
    ) -> Result<Self> {
        arch.validate()?;
        let check = |kind: &str, have: &BTreeMap<String, Tensor>, want: Vec<(String, Vec<usize>)>| -> Result<()> {
            if have.len() != want.len() {
                return Err(Error::Checkpoint(format!("expected {} {kind} tensors, found {}", want.len(), have.len())));
            }
            for (name, shape) in want {
                match have.get(&name) {
                    Some(t) if t.shape() == shape.as_slice() => {}
                    Some(t) => {
                        return Err(Error::Checkpoint(format!(
                            "{kind} `{name}` has shape {:?}, architecture needs {shape:?}",
                            t.shape()
                        )))
                    }
                    None => return Err(Error::Checkpoint(format!("missing {kind} `{name}`"))),
                }
            }
            Ok(())
        };
        check("parameter", &params, param_specs(&arch).into_iter().map(|s| (s.0, s.1)).collect())?;
        check("buffer", &buffers, buffer_specs(&arch).into_iter().map(|s| (s.0, s.1)).collect())?;
        for (name, moments) in optimizer.m.iter().chain(&optimizer.v) {
            match params.get(name) {
                Some(t) if t.len() == moments.len() => {}
                _ => return Err(Error::Checkpoint(format!("optimizer state `{name}` does not match a parameter"))),
            }
        }
        let layout = encoder_layout(&arch);
        Ok(Self { arch, params, buffers, optimizer, layout })
    }

    pub fn arch(&self) -> &Arch {
        &self.arch
    }

    pub fn params(&self) -> &BTreeMap<String, Tensor> {
        &self.params
    }

    pub fn buffers(&self) -> &BTreeMap<String, Tensor> {
        &self.buffers
    }

    pub fn optimizer(&self) -> &AdamState {
        &self.optimizer
    }

    pub(crate) fn optimizer_mut(&mut self) -> &mut AdamState {
        &mut self.optimizer
    }

    /// Mutable view of one trainable tensor's values.
    pub fn param_mut(&mut self, name: &str) -> Option<&mut [f64]> {
        self.params.get_mut(name).map(Tensor::data_mut)
    }

    pub fn param_count(&self) -> usize {
        self.params.values().map(Tensor::len).sum()
    }

    pub fn encoder_param_count(&self) -> usize {
        self.params.iter().filter(|(n, _)| n.starts_with("enc.")).map(|(_, t)| t.len()).sum()
    }

    pub fn decoder_param_count(&self) -> usize {
        self.param_count() - self.encoder_param_count()
    }

    pub(crate) fn apply_updates(&mut self, updates: Updates) {
        for (name, value) in updates {
            if let Some(t) = self.buffers.get_mut(&name) {
                t.data_mut().copy_from_slice(&value);
            }
        }
    }

    fn p(&self, name: &str) -> &[f64] {
        self.params.get(name).unwrap_or_else(|| panic!("parameter `{name}` missing")).data()
    }

    fn buf(&self, name: &str) -> &[f64] {
        self.buffers.get(name).unwrap_or_else(|| panic!("buffer `{name}` missing")).data()
    }

    pub(crate) fn input_len(&self) -> usize {
        2 * self.arch.m * self.arch.m
    }

    /// Encoder over `n` stacked inputs; returns `[n, 2D]` normalized reals.
    pub(crate) fn encoder_forward(&self, x: Vec<f64>, mode: Mode, updates: &mut Updates) -> Result<(Vec<f64>, EncoderCache)> {
        let nk = self.arch.kernel_sizes.len();
        let mut blocks = Vec::with_capacity(self.layout.len());
        let mut cur = x;
        for (i, lay) in self.layout.iter().enumerate() {
            let n = cur.len() / lay.dws[0].in_len();
            let blk = lay.pws[0].out_len();
            let mut dw_out = Vec::with_capacity(nk);
            let mut pw_pre = Vec::with_capacity(nk);
            let mut concat = vec![0.0; n * nk * blk];
            for j in 0..nk {
                let d = lay.dws[j].forward(self.p(&enc(i, &format!("br{j}.dw.w"))), &[], &cur);
                let pre = lay.pws[j].forward(
                    self.p(&enc(i, &format!("br{j}.pw.w"))),
                    self.p(&enc(i, &format!("br{j}.pw.b"))),
                    &d,
                );
                for s in 0..n {
                    let dst = &mut concat[(s * nk + j) * blk..(s * nk + j + 1) * blk];
                    for (o, &v) in dst.iter_mut().zip(&pre[s * blk..(s + 1) * blk]) {
                        *o = elu(v);
                    }
                }
                dw_out.push(d);
                pw_pre.push(pre);
            }
            let c1_pre = lay.c1.forward(self.p(&enc(i, "c1.w")), self.p(&enc(i, "c1.b")), &concat);
            let c1_out = elu_vec(&c1_pre);
            let c2_pre = lay.c2.forward(self.p(&enc(i, "c2.w")), self.p(&enc(i, "c2.b")), &c1_out);
            let c2_out = elu_vec(&c2_pre);
            let s = lay.out_spatial();
            let (gamma, beta) = (self.p(&enc(i, "bn.gamma")), self.p(&enc(i, "bn.beta")));
            let (y, bn) = match mode {
                Mode::Train => {
                    let (y, cache, mean, var) = bn_train(&c2_out, lay.c, s, gamma, beta);
                    updates.push((enc(i, "bn.mean"), blend(self.buf(&enc(i, "bn.mean")), &mean)));
                    updates.push((enc(i, "bn.var"), blend(self.buf(&enc(i, "bn.var")), &var)));
                    (y, Some(cache))
                }
                Mode::Eval => {
                    let y = bn_eval(&c2_out, lay.c, s, gamma, beta, self.buf(&enc(i, "bn.mean")), self.buf(&enc(i, "bn.var")));
                    (y, None)
                }
            };
            check_finite(|| format!("encoder block {i}"), &y)?;
            blocks.push(BlockCache { input: cur, dw_out, pw_pre, concat, c1_pre, c1_out, c2_pre, bn });
            cur = y;
        }
        let s_last = self.layout.last().expect("at least one block").out_spatial();
        let gap = gap_forward(&cur, s_last);
        let d = self.arch.symbols;
        let nvec = gap.len() / (2 * d);
        let scale = match mode {
            Mode::Train => {
                let power = gap.iter().map(|v| v * v).sum::<f64>() / (nvec * d) as f64;
                let s = (power + POWER_FLOOR).sqrt();
                updates.push((POWER_RMS.to_string(), blend(self.buf(POWER_RMS), &[s])));
                s
            }
            Mode::Eval => self.buf(POWER_RMS)[0],
        };
        let out: Vec<f64> = gap.iter().map(|v| v / scale).collect();
        check_finite(|| "power normalization".to_string(), &out)?;
        Ok((out, EncoderCache { blocks, gap, scale }))
    }

    /// Accumulates encoder gradients given `dL/d(output)`.
    pub(crate) fn encoder_backward(&self, cache: &EncoderCache, dout: &[f64], grads: &mut Gradients) {
        let nk = self.arch.kernel_sizes.len();
        let d = self.arch.symbols;
        let nvec = cache.gap.len() / (2 * d);
        let s = cache.scale;
        let gx: f64 = dout.iter().zip(&cache.gap).map(|(g, x)| g * x).sum();
        let k = gx / (s * s * s * (nvec * d) as f64);
        let dgap: Vec<f64> = dout.iter().zip(&cache.gap).map(|(g, x)| g / s - k * x).collect();

        let s_last = self.layout.last().expect("at least one block").out_spatial();
        let mut dcur = gap_backward(&dgap, s_last);
        for (i, lay) in self.layout.iter().enumerate().rev() {
            let bc = &cache.blocks[i];
            let bn = bc.bn.as_ref().expect("backward needs a training-mode forward pass");
            let (mut dc2, dgamma, dbeta) = bn_backward(&dcur, bn, lay.c, lay.out_spatial(), self.p(&enc(i, "bn.gamma")));
            accumulate(grads, enc(i, "bn.gamma"), &dgamma);
            accumulate(grads, enc(i, "bn.beta"), &dbeta);

            elu_backward(&bc.c2_pre, &mut dc2);
            let (mut dc1, dw, db) = lay.c2.backward(self.p(&enc(i, "c2.w")), &bc.c1_out, &dc2, true, true);
            accumulate(grads, enc(i, "c2.w"), &dw);
            accumulate(grads, enc(i, "c2.b"), &db);

            elu_backward(&bc.c1_pre, &mut dc1);
            let (dconcat, dw, db) = lay.c1.backward(self.p(&enc(i, "c1.w")), &bc.concat, &dc1, true, true);
            accumulate(grads, enc(i, "c1.w"), &dw);
            accumulate(grads, enc(i, "c1.b"), &db);

            let blk = lay.pws[0].out_len();
            let n = dconcat.len() / (nk * blk);
            let need_dx = i > 0;
            let mut dinput = if need_dx { vec![0.0; bc.input.len()] } else { Vec::new() };
            for j in 0..nk {
                let mut dpre: Vec<f64> = (0..n)
                    .flat_map(|s| dconcat[(s * nk + j) * blk..(s * nk + j + 1) * blk].iter().copied())
                    .collect();
                elu_backward(&bc.pw_pre[j], &mut dpre);
                let pw_name = enc(i, &format!("br{j}.pw.w"));
                let (ddw, dw, db) = lay.pws[j].backward(self.p(&pw_name), &bc.dw_out[j], &dpre, true, true);
                accumulate(grads, pw_name, &dw);
                accumulate(grads, enc(i, &format!("br{j}.pw.b")), &db);
                let dw_name = enc(i, &format!("br{j}.dw.w"));
                let (dx, dw, _) = lay.dws[j].backward(self.p(&dw_name), &bc.input, &ddw, need_dx, false);
                accumulate(grads, dw_name, &dw);
                if need_dx {
                    add_into(&mut dinput, &dx);
                }
            }
            dcur = dinput;
        }
    }

    /// Decoder over `[n, 2D]` received reals; returns one logit per row.
    pub(crate) fn decoder_forward(&self, z: Vec<f64>, mode: Mode, updates: &mut Updates) -> Result<(Vec<f64>, DecoderCache)> {
        let mut blocks = Vec::new();
        let mut x = z;
        for (i, (inp, w, proj)) in decoder_layout(&self.arch).into_iter().enumerate() {
            let a_pre = linear_forward(&x, inp, w, self.p(&dec(i, "l1.w")), self.p(&dec(i, "l1.b")));
            let a = elu_vec(&a_pre);
            let b_pre = linear_forward(&a, w, w, self.p(&dec(i, "l2.w")), self.p(&dec(i, "l2.b")));
            let b = elu_vec(&b_pre);
            let mut c_pre = linear_forward(&b, w, w, self.p(&dec(i, "l3.w")), self.p(&dec(i, "l3.b")));
            if proj {
                add_into(&mut c_pre, &linear_forward(&x, inp, w, self.p(&dec(i, "proj.w")), &[]));
            } else {
                add_into(&mut c_pre, &x);
            }
            let c = elu_vec(&c_pre);
            let (gamma, beta) = (self.p(&dec(i, "bn.gamma")), self.p(&dec(i, "bn.beta")));
            let (y, bn) = match mode {
                Mode::Train => {
                    let (y, cache, mean, var) = bn_train(&c, w, 1, gamma, beta);
                    updates.push((dec(i, "bn.mean"), blend(self.buf(&dec(i, "bn.mean")), &mean)));
                    updates.push((dec(i, "bn.var"), blend(self.buf(&dec(i, "bn.var")), &var)));
                    (y, Some(cache))
                }
                Mode::Eval => {
                    (bn_eval(&c, w, 1, gamma, beta, self.buf(&dec(i, "bn.mean")), self.buf(&dec(i, "bn.var"))), None)
                }
            };
            check_finite(|| format!("decoder block {i}"), &y)?;
            blocks.push(ResCache { x, a_pre, a, b_pre, b, c_pre, bn });
            x = y;
        }
        let last_w = self.arch.residual_widths.last().copied().expect("at least one residual block");
        let logits = linear_forward(&x, last_w, 1, self.p("dec.out.w"), self.p("dec.out.b"));
        check_finite(|| "decoder output".to_string(), &logits)?;
        Ok((logits, DecoderCache { blocks, last: x }))
    }

    /// Accumulates decoder gradients and returns `dL/dz`.
    pub(crate) fn decoder_backward(&self, cache: &DecoderCache, dlogits: &[f64], grads: &mut Gradients) -> Vec<f64> {
        let layout = decoder_layout(&self.arch);
        let last_w = layout.last().expect("at least one residual block").1;
        let (mut dy, dw, db) = linear_backward(&cache.last, dlogits, last_w, 1, self.p("dec.out.w"), true);
        accumulate(grads, "dec.out.w".to_string(), &dw);
        accumulate(grads, "dec.out.b".to_string(), &db);
        for (i, &(inp, w, proj)) in layout.iter().enumerate().rev() {
            let rc = &cache.blocks[i];
            let bn = rc.bn.as_ref().expect("backward needs a training-mode forward pass");
            let (mut dc, dgamma, dbeta) = bn_backward(&dy, bn, w, 1, self.p(&dec(i, "bn.gamma")));
            accumulate(grads, dec(i, "bn.gamma"), &dgamma);
            accumulate(grads, dec(i, "bn.beta"), &dbeta);
            elu_backward(&rc.c_pre, &mut dc);

            let (mut dx, dskip_w) = if proj {
                let (dx, dw, _) = linear_backward(&rc.x, &dc, inp, w, self.p(&dec(i, "proj.w")), false);
                (dx, Some(dw))
            } else {
                (dc.clone(), None)
            };
            if let Some(dw) = dskip_w {
                accumulate(grads, dec(i, "proj.w"), &dw);
            }

            let (mut db_, dw, dbias) = linear_backward(&rc.b, &dc, w, w, self.p(&dec(i, "l3.w")), true);
            accumulate(grads, dec(i, "l3.w"), &dw);
            accumulate(grads, dec(i, "l3.b"), &dbias);
            elu_backward(&rc.b_pre, &mut db_);
            let (mut da, dw, dbias) = linear_backward(&rc.a, &db_, w, w, self.p(&dec(i, "l2.w")), true);
            accumulate(grads, dec(i, "l2.w"), &dw);
            accumulate(grads, dec(i, "l2.b"), &dbias);
            elu_backward(&rc.a_pre, &mut da);
            let (dx1, dw, dbias) = linear_backward(&rc.x, &da, inp, w, self.p(&dec(i, "l1.w")), true);
            accumulate(grads, dec(i, "l1.w"), &dw);
            accumulate(grads, dec(i, "l1.b"), &dbias);
            add_into(&mut dx, &dx1);
            dy = dx;
        }
        dy
    }

    /// Inference-mode encoding of one covariance into D complex symbols.
    pub fn encode(&self, r: &ComplexMatrix) -> Result<Vec<Complex64>> {
        Ok(self.encode_batch(std::slice::from_ref(r))?.pop().expect("one input"))
    }

    /// Inference-mode encoding; running statistics are used, so each output
    /// depends only on its own input.
    pub fn encode_batch(&self, rs: &[ComplexMatrix]) -> Result<Vec<Vec<Complex64>>> {
        let m = self.arch.m;
        let mut x = Vec::with_capacity(rs.len() * self.input_len());
        for r in rs {
            if r.rows() != m || r.cols() != m {
                return Err(Error::DimensionMismatch(format!(
                    "encoder expects {m}x{m} covariances, got {}x{}",
                    r.rows(),
                    r.cols()
                )));
            }
            x.extend(covariance_to_input(r));
        }
        let (out, _) = self.encoder_forward(x, Mode::Eval, &mut Vec::new())?;
        Ok(out.chunks(2 * self.arch.symbols).map(reals_to_symbols).collect())
    }

    /// Training-mode encoding (batch statistics, including the batch power
    /// normalization); running statistics are left untouched.
    pub fn encode_train_batch(&self, rs: &[ComplexMatrix]) -> Result<Vec<Vec<Complex64>>> {
        if rs.is_empty() {
            return Err(Error::EmptyInput("encoder batch"));
        }
        let x: Vec<f64> = rs.iter().flat_map(covariance_to_input).collect();
        if x.len() != rs.len() * self.input_len() {
            return Err(Error::DimensionMismatch(format!("encoder expects {0}x{0} covariances", self.arch.m)));
        }
        let (out, _) = self.encoder_forward(x, Mode::Train, &mut Vec::new())?;
        Ok(out.chunks(2 * self.arch.symbols).map(reals_to_symbols).collect())
    }

    /// Logit of `P(H1 | z)`.
    pub fn decode_logit(&self, z: &[Complex64]) -> Result<f64> {
        Ok(self.decode_logits(std::slice::from_ref(&z.to_vec()))?[0])
    }

    pub fn decode_logits(&self, zs: &[Vec<Complex64>]) -> Result<Vec<f64>> {
        let d = self.arch.symbols;
        let mut x = Vec::with_capacity(zs.len() * 2 * d);
        for z in zs {
            if z.len() != d {
                return Err(Error::DimensionMismatch(format!("decoder expects {d} symbols, got {}", z.len())));
            }
            x.extend(symbols_to_reals(z));
        }
        Ok(self.decoder_forward(x, Mode::Eval, &mut Vec::new())?.0)
    }

    /// `P(H1 | z)`; `1 - decode(z)` is the probability the PU is absent.
    pub fn decode(&self, z: &[Complex64]) -> Result<f64> {
        Ok(super::sigmoid(self.decode_logit(z)?))
    }
}

pub(crate) fn accumulate(grads: &mut Gradients, name: String, g: &[f64]) {
    match grads.get_mut(&name) {
        Some(acc) => add_into(acc, g),
        None => {
            grads.insert(name, g.to_vec());
        }
    }
}

/// Pairs reals `(2i, 2i+1)` into symbol `i`.
pub(crate) fn reals_to_symbols(x: &[f64]) -> Vec<Complex64> {
    x.chunks(2).map(|p| Complex64::new(p[0], p[1])).collect()
}

pub(crate) fn symbols_to_reals(z: &[Complex64]) -> Vec<f64> {
    z.iter().flat_map(|s| [s.re, s.im]).collect()
}
