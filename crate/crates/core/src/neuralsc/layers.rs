//! Forward and backward kernels for the handful of layer types the
//! transceiver uses. Activations are stored sample-major, `[n, c, h, w]`.

use rayon::prelude::*;

/// Samples per parallel work unit when reducing weight gradients. Fixed so
/// the reduction order, and hence the result, does not depend on the pool size.
pub(crate) const CHUNK: usize = 16;

pub(crate) const BN_EPS: f64 = 1e-5;

#[inline]
pub(crate) fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp_m1()
    }
}

#[inline]
pub(crate) fn elu_grad(pre: f64) -> f64 {
    if pre > 0.0 {
        1.0
    } else {
        pre.exp()
    }
}

pub(crate) fn elu_vec(pre: &[f64]) -> Vec<f64> {
    pre.iter().map(|&x| elu(x)).collect()
}

/// `dpre = dout * elu'(pre)`, in place on `dout`.
pub(crate) fn elu_backward(pre: &[f64], dout: &mut [f64]) {
    for (d, &p) in dout.iter_mut().zip(pre) {
        *d *= elu_grad(p);
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Output indices `[lo, hi)` whose tap at kernel offset `koff` lands inside the input.
#[inline]
fn valid_range(koff: usize, pad: usize, stride: usize, n_in: usize, n_out: usize) -> (usize, usize) {
    let lo = if pad > koff { (pad - koff).div_ceil(stride) } else { 0 };
    let top = n_in + pad;
    let hi = if top > koff { ((top - koff - 1) / stride + 1).min(n_out) } else { 0 };
    (lo, hi.max(lo))
}

/// Grouped 2-D convolution with "same"-style padding: output size
/// `ceil(in / stride)`, extra padding (if odd) goes to the bottom/right.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct Conv2d {
    pub cin: usize,
    pub cout: usize,
    pub k: usize,
    pub stride: usize,
    pub groups: usize,
    pub h: usize,
    pub w: usize,
    pub out_h: usize,
    pub out_w: usize,
    pad_y: usize,
    pad_x: usize,
}

impl Conv2d {
    pub fn same(cin: usize, cout: usize, k: usize, stride: usize, groups: usize, h: usize, w: usize) -> Self {
        let out_h = h.div_ceil(stride);
        let out_w = w.div_ceil(stride);
        let pad_y = ((out_h - 1) * stride + k).saturating_sub(h) / 2;
        let pad_x = ((out_w - 1) * stride + k).saturating_sub(w) / 2;
        Self { cin, cout, k, stride, groups, h, w, out_h, out_w, pad_y, pad_x }
    }

    pub fn in_len(&self) -> usize {
        self.cin * self.h * self.w
    }

    pub fn out_len(&self) -> usize {
        self.cout * self.out_h * self.out_w
    }

    pub fn weight_shape(&self) -> Vec<usize> {
        vec![self.cout, self.cin / self.groups, self.k, self.k]
    }

    pub fn fan_in(&self) -> usize {
        self.cin / self.groups * self.k * self.k
    }

    pub fn fan_out(&self) -> usize {
        self.cout / self.groups * self.k * self.k
    }

    /// Visits every (weight index, input offset, output offset, run length)
    /// tap so forward and backward share one indexing scheme.
    #[inline]
    fn for_each_tap(&self, mut f: impl FnMut(usize, usize, usize, usize, usize)) {
        let (cig, cog) = (self.cin / self.groups, self.cout / self.groups);
        let (k, s) = (self.k, self.stride);
        let plane_in = self.h * self.w;
        let plane_out = self.out_h * self.out_w;
        for co in 0..self.cout {
            let g = co / cog;
            for cil in 0..cig {
                let ci = g * cig + cil;
                for ky in 0..k {
                    let (oy0, oy1) = valid_range(ky, self.pad_y, s, self.h, self.out_h);
                    for kx in 0..k {
                        let widx = ((co * cig + cil) * k + ky) * k + kx;
                        let (ox0, ox1) = valid_range(kx, self.pad_x, s, self.w, self.out_w);
                        if ox1 <= ox0 {
                            continue;
                        }
                        for oy in oy0..oy1 {
                            let iy = oy * s + ky - self.pad_y;
                            let x_off = ci * plane_in + iy * self.w + ox0 * s + kx - self.pad_x;
                            let y_off = co * plane_out + oy * self.out_w + ox0;
                            f(widx, x_off, y_off, ox1 - ox0, s);
                        }
                    }
                }
            }
        }
    }

    fn forward_one(&self, w: &[f64], b: &[f64], x: &[f64], y: &mut [f64]) {
        let plane_out = self.out_h * self.out_w;
        for co in 0..self.cout {
            let bias = b.get(co).copied().unwrap_or(0.0);
            y[co * plane_out..(co + 1) * plane_out].fill(bias);
        }
        self.for_each_tap(|widx, x_off, y_off, len, s| {
            let wv = w[widx];
            let yr = &mut y[y_off..y_off + len];
            if s == 1 {
                for (yv, xv) in yr.iter_mut().zip(&x[x_off..x_off + len]) {
                    *yv += wv * xv;
                }
            } else {
                for (i, yv) in yr.iter_mut().enumerate() {
                    *yv += wv * x[x_off + i * s];
                }
            }
        });
    }

    fn backward_one(&self, w: &[f64], x: &[f64], dy: &[f64], dx: Option<&mut [f64]>, dw: &mut [f64], db: &mut [f64]) {
        if !db.is_empty() {
            let plane_out = self.out_h * self.out_w;
            for (co, d) in db.iter_mut().enumerate() {
                *d += dy[co * plane_out..(co + 1) * plane_out].iter().sum::<f64>();
            }
        }
        match dx {
            Some(dx) => self.for_each_tap(|widx, x_off, y_off, len, s| {
                let wv = w[widx];
                let dyr = &dy[y_off..y_off + len];
                let mut acc = 0.0;
                for (i, &g) in dyr.iter().enumerate() {
                    acc += g * x[x_off + i * s];
                    dx[x_off + i * s] += wv * g;
                }
                dw[widx] += acc;
            }),
            None => self.for_each_tap(|widx, x_off, y_off, len, s| {
                let dyr = &dy[y_off..y_off + len];
                let mut acc = 0.0;
                for (i, &g) in dyr.iter().enumerate() {
                    acc += g * x[x_off + i * s];
                }
                dw[widx] += acc;
            }),
        }
    }

    /// `b` may be empty for a bias-free convolution.
    pub fn forward(&self, w: &[f64], b: &[f64], x: &[f64]) -> Vec<f64> {
        let n = x.len() / self.in_len();
        let mut y = vec![0.0; n * self.out_len()];
        y.par_chunks_mut(self.out_len())
            .zip(x.par_chunks(self.in_len()))
            .for_each(|(yo, xi)| self.forward_one(w, b, xi, yo));
        y
    }

    /// Returns `(dx, dw, db)`; `dx` is empty unless requested, `db` is empty
    /// when `has_bias` is false.
    pub fn backward(&self, w: &[f64], x: &[f64], dy: &[f64], need_dx: bool, has_bias: bool) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let (il, ol) = (self.in_len(), self.out_len());
        let wl = w.len();
        let bl = if has_bias { self.cout } else { 0 };
        let run_chunk = |xc: &[f64], dyc: &[f64], mut dxc: Option<&mut [f64]>| {
            let mut dw = vec![0.0; wl];
            let mut db = vec![0.0; bl];
            for (i, (xi, dyi)) in xc.chunks(il).zip(dyc.chunks(ol)).enumerate() {
                let dxi = dxc.as_deref_mut().map(|d| &mut d[i * il..(i + 1) * il]);
                self.backward_one(w, xi, dyi, dxi, &mut dw, &mut db);
            }
            (dw, db)
        };
        let mut dx = if need_dx { vec![0.0; x.len()] } else { Vec::new() };
        let partials: Vec<(Vec<f64>, Vec<f64>)> = if need_dx {
            dx.par_chunks_mut(CHUNK * il)
                .zip(x.par_chunks(CHUNK * il))
                .zip(dy.par_chunks(CHUNK * ol))
                .map(|((dxc, xc), dyc)| run_chunk(xc, dyc, Some(dxc)))
                .collect()
        } else {
            x.par_chunks(CHUNK * il)
                .zip(dy.par_chunks(CHUNK * ol))
                .map(|(xc, dyc)| run_chunk(xc, dyc, None))
                .collect()
        };
        let mut dw = vec![0.0; wl];
        let mut db = vec![0.0; bl];
        for (pw, pb) in partials {
            add_into(&mut dw, &pw);
            add_into(&mut db, &pb);
        }
        (dx, dw, db)
    }
}

pub(crate) fn add_into(acc: &mut [f64], x: &[f64]) {
    for (a, b) in acc.iter_mut().zip(x) {
        *a += b;
    }
}

/// Saved normalized activations for the batch-norm backward pass.
#[derive(Clone, Debug)]
pub(crate) struct BnCache {
    pub xhat: Vec<f64>,
    pub inv_std: Vec<f64>,
}

/// Batch statistics over `n` samples and `s` positions per channel; layout `[n, c, s]`.
pub(crate) fn bn_train(x: &[f64], c: usize, s: usize, gamma: &[f64], beta: &[f64]) -> (Vec<f64>, BnCache, Vec<f64>, Vec<f64>) {
    let n = x.len() / (c * s);
    let count = (n * s) as f64;
    let mut mean = vec![0.0; c];
    let mut var = vec![0.0; c];
    for i in 0..n {
        for ch in 0..c {
            let base = (i * c + ch) * s;
            mean[ch] += x[base..base + s].iter().sum::<f64>();
        }
    }
    for m in mean.iter_mut() {
        *m /= count;
    }
    for i in 0..n {
        for ch in 0..c {
            let base = (i * c + ch) * s;
            var[ch] += x[base..base + s].iter().map(|v| (v - mean[ch]).powi(2)).sum::<f64>();
        }
    }
    for v in var.iter_mut() {
        *v /= count;
    }
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
    let mut xhat = vec![0.0; x.len()];
    let mut y = vec![0.0; x.len()];
    for i in 0..n {
        for ch in 0..c {
            let base = (i * c + ch) * s;
            for j in base..base + s {
                xhat[j] = (x[j] - mean[ch]) * inv_std[ch];
                y[j] = gamma[ch] * xhat[j] + beta[ch];
            }
        }
    }
    (y, BnCache { xhat, inv_std }, mean, var)
}

pub(crate) fn bn_eval(x: &[f64], c: usize, s: usize, gamma: &[f64], beta: &[f64], mean: &[f64], var: &[f64]) -> Vec<f64> {
    let mut y = x.to_vec();
    for (idx, v) in y.iter_mut().enumerate() {
        let ch = (idx / s) % c;
        *v = gamma[ch] * (*v - mean[ch]) / (var[ch] + BN_EPS).sqrt() + beta[ch];
    }
    y
}

/// Returns `(dx, dgamma, dbeta)`.
pub(crate) fn bn_backward(dy: &[f64], cache: &BnCache, c: usize, s: usize, gamma: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let n = dy.len() / (c * s);
    let count = (n * s) as f64;
    let mut dgamma = vec![0.0; c];
    let mut dbeta = vec![0.0; c];
    for i in 0..n {
        for ch in 0..c {
            let base = (i * c + ch) * s;
            for j in base..base + s {
                dgamma[ch] += dy[j] * cache.xhat[j];
                dbeta[ch] += dy[j];
            }
        }
    }
    let mut dx = vec![0.0; dy.len()];
    for i in 0..n {
        for ch in 0..c {
            let k = gamma[ch] * cache.inv_std[ch] / count;
            let base = (i * c + ch) * s;
            for j in base..base + s {
                dx[j] = k * (count * dy[j] - dbeta[ch] - cache.xhat[j] * dgamma[ch]);
            }
        }
    }
    (dx, dgamma, dbeta)
}

/// `y = x W^T + b` for `x: [n, inp]`, `W: [out, inp]`; `b` may be empty.
pub(crate) fn linear_forward(x: &[f64], inp: usize, out: usize, w: &[f64], b: &[f64]) -> Vec<f64> {
    let n = x.len() / inp;
    let mut y = vec![0.0; n * out];
    for (xi, yi) in x.chunks(inp).zip(y.chunks_mut(out)) {
        for (o, yo) in yi.iter_mut().enumerate() {
            let row = &w[o * inp..(o + 1) * inp];
            *yo = b.get(o).copied().unwrap_or(0.0) + row.iter().zip(xi).map(|(a, b)| a * b).sum::<f64>();
        }
    }
    y
}

/// Returns `(dx, dw, db)`; `db` is empty when `has_bias` is false.
pub(crate) fn linear_backward(x: &[f64], dy: &[f64], inp: usize, out: usize, w: &[f64], has_bias: bool) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut dx = vec![0.0; x.len()];
    let mut dw = vec![0.0; out * inp];
    let mut db = vec![0.0; if has_bias { out } else { 0 }];
    for ((xi, dyi), dxi) in x.chunks(inp).zip(dy.chunks(out)).zip(dx.chunks_mut(inp)) {
        for (o, &g) in dyi.iter().enumerate() {
            if has_bias {
                db[o] += g;
            }
            let row = &w[o * inp..(o + 1) * inp];
            let drow = &mut dw[o * inp..(o + 1) * inp];
            for j in 0..inp {
                drow[j] += g * xi[j];
                dxi[j] += g * row[j];
            }
        }
    }
    (dx, dw, db)
}

/// Mean over the `s` positions of each channel: `[n, c, s] -> [n, c]`.
pub(crate) fn gap_forward(x: &[f64], s: usize) -> Vec<f64> {
    x.chunks(s).map(|p| p.iter().sum::<f64>() / s as f64).collect()
}

pub(crate) fn gap_backward(dy: &[f64], s: usize) -> Vec<f64> {
    dy.iter().flat_map(|&g| std::iter::repeat_n(g / s as f64, s)).collect()
}
