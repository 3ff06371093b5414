//! Forward kernels and their vector-Jacobian products.
//!
//! Every reduction runs in a fixed row-major order so results are
//! bit-reproducible for identical inputs.

use super::Tensor;
use crate::error::{shape_err, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConvMode {
    /// Kernel `[k, k, Cin, Cout]`, mixes channels.
    Dense,
    /// Kernel `[k, k, C]`, one spatial filter per channel.
    Depthwise,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Sigmoid,
    Tanh,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PoolKind {
    Avg,
    Max,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ElementwiseKind {
    Add,
    Mul,
}

/// Validated geometry of a same-padded convolution.
#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvGeom {
    b: usize,
    h: usize,
    w: usize,
    cin: usize,
    cout: usize,
    k: usize,
}

impl ConvGeom {
    fn new(input: &Tensor, kernel: &Tensor, bias: &[f64], mode: ConvMode) -> Result<Self> {
        let [b, h, w, cin] = input.dims4()?;
        let (k, kin, cout) = match (mode, kernel.shape()) {
            (ConvMode::Dense, &[k1, k2, kin, cout]) if k1 == k2 => (k1, kin, cout),
            (ConvMode::Depthwise, &[k1, k2, c]) if k1 == k2 => (k1, c, c),
            (_, s) => return shape_err(format!("{mode:?} conv kernel has shape {s:?}")),
        };
        if k % 2 == 0 {
            return Err(Error::InvalidArgument(format!(
                "conv kernel size must be odd, got {k}"
            )));
        }
        if kin != cin {
            return shape_err(format!(
                "conv kernel expects {kin} input channels, input has {cin}"
            ));
        }
        if bias.len() != cout {
            return shape_err(format!("conv bias has {} entries, need {cout}", bias.len()));
        }
        Ok(ConvGeom {
            b,
            h,
            w,
            cin,
            cout,
            k,
        })
    }

    /// Calls `f(out_pixel, in_pixel, tap)` for every in-bounds kernel tap, in
    /// row-major order over output pixels then taps. Pixel indices are flat
    /// `(b, i, j)` offsets; taps are `di * k + dj`.
    #[inline]
    fn for_each_tap(&self, mut f: impl FnMut(usize, usize, usize)) {
        let p = self.k / 2;
        for b in 0..self.b {
            for i in 0..self.h {
                for j in 0..self.w {
                    let out_px = (b * self.h + i) * self.w + j;
                    for di in 0..self.k {
                        let Some(ii) = (i + di).checked_sub(p).filter(|&ii| ii < self.h) else {
                            continue;
                        };
                        for dj in 0..self.k {
                            let Some(jj) = (j + dj).checked_sub(p).filter(|&jj| jj < self.w) else {
                                continue;
                            };
                            let in_px = (b * self.h + ii) * self.w + jj;
                            f(out_px, in_px, di * self.k + dj);
                        }
                    }
                }
            }
        }
    }
}

/// Same-padded (zero) 2-D convolution, stride 1.
///
/// `output[b,i,j,c] = bias[c] + Σ input · kernel` over the receptive field.
pub fn conv2d(input: &Tensor, kernel: &Tensor, bias: &[f64], mode: ConvMode) -> Result<Tensor> {
    let g = ConvGeom::new(input, kernel, bias, mode)?;
    let (cin, cout) = (g.cin, g.cout);
    let x = input.data();
    let kd = kernel.data();
    let mut out = vec![0.0; g.b * g.h * g.w * cout];
    for px in out.chunks_exact_mut(cout) {
        px.copy_from_slice(bias);
    }
    match mode {
        ConvMode::Dense => g.for_each_tap(|o, i, tap| {
            let out_px = &mut out[o * cout..(o + 1) * cout];
            let in_px = &x[i * cin..(i + 1) * cin];
            let taps = &kd[tap * cin * cout..(tap + 1) * cin * cout];
            for (xv, krow) in in_px.iter().zip(taps.chunks_exact(cout)) {
                for (acc, kv) in out_px.iter_mut().zip(krow) {
                    *acc += xv * kv;
                }
            }
        }),
        ConvMode::Depthwise => g.for_each_tap(|o, i, tap| {
            let out_px = &mut out[o * cout..(o + 1) * cout];
            let in_px = &x[i * cin..(i + 1) * cin];
            let taps = &kd[tap * cin..(tap + 1) * cin];
            for ((acc, xv), kv) in out_px.iter_mut().zip(in_px).zip(taps) {
                *acc += xv * kv;
            }
        }),
    }
    Tensor::from_parts(vec![g.b, g.h, g.w, cout], out).check_finite("conv2d output")
}

/// Gradients of [`conv2d`] with respect to input, kernel and bias.
pub(crate) fn conv2d_backward(
    input: &Tensor,
    kernel: &Tensor,
    mode: ConvMode,
    grad_out: &Tensor,
) -> Result<(Tensor, Tensor, Tensor)> {
    let cout = match (mode, kernel.shape()) {
        (ConvMode::Dense, &[_, _, _, c]) | (ConvMode::Depthwise, &[_, _, c]) => c,
        (_, s) => return shape_err(format!("{mode:?} conv kernel has shape {s:?}")),
    };
    let zero_bias = vec![0.0; cout];
    let g = ConvGeom::new(input, kernel, &zero_bias, mode)?;
    if grad_out.shape() != [g.b, g.h, g.w, cout] {
        return shape_err("conv2d upstream gradient shape");
    }
    let cin = g.cin;
    let x = input.data();
    let kd = kernel.data();
    let go = grad_out.data();
    let mut gin = vec![0.0; x.len()];
    let mut gk = vec![0.0; kd.len()];
    let mut gb = vec![0.0; cout];
    for px in go.chunks_exact(cout) {
        for (acc, v) in gb.iter_mut().zip(px) {
            *acc += v;
        }
    }
    match mode {
        ConvMode::Dense => g.for_each_tap(|o, i, tap| {
            let go_px = &go[o * cout..(o + 1) * cout];
            let x_px = &x[i * cin..(i + 1) * cin];
            let gin_px = &mut gin[i * cin..(i + 1) * cin];
            let base = tap * cin * cout;
            for ci in 0..cin {
                let krow = &kd[base + ci * cout..base + (ci + 1) * cout];
                let gkrow = &mut gk[base + ci * cout..base + (ci + 1) * cout];
                let xv = x_px[ci];
                let mut acc = 0.0;
                for ((gkv, kv), gv) in gkrow.iter_mut().zip(krow).zip(go_px) {
                    acc += gv * kv;
                    *gkv += xv * gv;
                }
                gin_px[ci] += acc;
            }
        }),
        ConvMode::Depthwise => g.for_each_tap(|o, i, tap| {
            let go_px = &go[o * cout..(o + 1) * cout];
            for c in 0..cin {
                gin[i * cin + c] += go_px[c] * kd[tap * cin + c];
                gk[tap * cin + c] += x[i * cin + c] * go_px[c];
            }
        }),
    }
    Ok((
        Tensor::from_parts(input.shape().to_vec(), gin),
        Tensor::from_parts(kernel.shape().to_vec(), gk),
        Tensor::from_parts(vec![cout], gb),
    ))
}

/// Affine map `input · weight + bias` applied to each batch row.
pub fn fully_connected(input: &Tensor, weight: &Tensor, bias: &[f64]) -> Result<Tensor> {
    let [b, din] = input.dims2()?;
    let [wr, dout] = weight.dims2()?;
    if wr != din {
        return shape_err(format!(
            "fully_connected: input width {din}, weight rows {wr}"
        ));
    }
    if bias.len() != dout {
        return shape_err(format!(
            "fully_connected: bias {} vs {dout} outputs",
            bias.len()
        ));
    }
    let w = weight.data();
    let mut out = Vec::with_capacity(b * dout);
    for row in input.data().chunks_exact(din) {
        let mut acc = bias.to_vec();
        for (xv, wrow) in row.iter().zip(w.chunks_exact(dout)) {
            for (a, wv) in acc.iter_mut().zip(wrow) {
                *a += xv * wv;
            }
        }
        out.extend_from_slice(&acc);
    }
    Tensor::from_parts(vec![b, dout], out).check_finite("fully_connected output")
}

pub(crate) fn fully_connected_backward(
    input: &Tensor,
    weight: &Tensor,
    grad_out: &Tensor,
) -> Result<(Tensor, Tensor, Tensor)> {
    let [b, din] = input.dims2()?;
    let [_, dout] = weight.dims2()?;
    if grad_out.shape() != [b, dout] {
        return shape_err("fully_connected upstream gradient shape");
    }
    let w = weight.data();
    let mut gin = vec![0.0; b * din];
    let mut gw = vec![0.0; din * dout];
    let mut gb = vec![0.0; dout];
    for ((xrow, grow), ginrow) in input
        .data()
        .chunks_exact(din)
        .zip(grad_out.data().chunks_exact(dout))
        .zip(gin.chunks_exact_mut(din))
    {
        for (a, g) in gb.iter_mut().zip(grow) {
            *a += g;
        }
        for d in 0..din {
            let wrow = &w[d * dout..(d + 1) * dout];
            let gwrow = &mut gw[d * dout..(d + 1) * dout];
            let mut acc = 0.0;
            for ((gwv, wv), g) in gwrow.iter_mut().zip(wrow).zip(grow) {
                acc += g * wv;
                *gwv += xrow[d] * g;
            }
            ginrow[d] = acc;
        }
    }
    Ok((
        Tensor::from_parts(vec![b, din], gin),
        Tensor::from_parts(vec![din, dout], gw),
        Tensor::from_parts(vec![dout], gb),
    ))
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn activation(input: &Tensor, kind: Activation) -> Tensor {
    let f: fn(f64) -> f64 = match kind {
        Activation::Relu => |x| if x > 0.0 { x } else { 0.0 },
        Activation::Sigmoid => sigmoid,
        Activation::Tanh => f64::tanh,
    };
    Tensor::from_parts(
        input.shape().to_vec(),
        input.data().iter().map(|&x| f(x)).collect(),
    )
}

/// Backward of [`activation`], expressed through the forward output.
pub(crate) fn activation_backward(output: &Tensor, kind: Activation, grad_out: &Tensor) -> Tensor {
    let d: fn(f64) -> f64 = match kind {
        Activation::Relu => |y| if y > 0.0 { 1.0 } else { 0.0 },
        Activation::Sigmoid => |y| y * (1.0 - y),
        Activation::Tanh => |y| 1.0 - y * y,
    };
    Tensor::from_parts(
        output.shape().to_vec(),
        output
            .data()
            .iter()
            .zip(grad_out.data())
            .map(|(&y, g)| d(y) * g)
            .collect(),
    )
}

/// Per-channel reduction over the full spatial extent, `[B,H,W,C] -> [B,1,1,C]`.
///
/// The second value holds, for max pooling, the flat input index chosen for
/// each output (first maximum in row-major order).
pub fn global_pool(input: &Tensor, kind: PoolKind) -> Result<(Tensor, Vec<usize>)> {
    let [b, h, w, c] = input.dims4()?;
    if h == 0 || w == 0 {
        return Err(Error::Empty("global_pool over empty spatial extent".into()));
    }
    let x = input.data();
    let hw = h * w;
    let mut out = Vec::with_capacity(b * c);
    let mut argmax = Vec::new();
    for bi in 0..b {
        let base = bi * hw * c;
        for ch in 0..c {
            match kind {
                PoolKind::Avg => {
                    let sum: f64 = (0..hw).map(|p| x[base + p * c + ch]).sum();
                    out.push(sum / hw as f64);
                }
                PoolKind::Max => {
                    let mut best = base + ch;
                    for p in 1..hw {
                        let idx = base + p * c + ch;
                        if x[idx] > x[best] {
                            best = idx;
                        }
                    }
                    out.push(x[best]);
                    argmax.push(best);
                }
            }
        }
    }
    Ok((Tensor::from_parts(vec![b, 1, 1, c], out), argmax))
}

pub(crate) fn global_pool_backward(
    input_shape: &[usize],
    kind: PoolKind,
    argmax: &[usize],
    grad_out: &Tensor,
) -> Tensor {
    let (b, h, w, c) = (
        input_shape[0],
        input_shape[1],
        input_shape[2],
        input_shape[3],
    );
    let hw = h * w;
    let g = grad_out.data();
    let mut gin = vec![0.0; b * hw * c];
    match kind {
        PoolKind::Avg => {
            let scale = 1.0 / hw as f64;
            for bi in 0..b {
                for p in 0..hw {
                    let off = (bi * hw + p) * c;
                    for ch in 0..c {
                        gin[off + ch] = g[bi * c + ch] * scale;
                    }
                }
            }
        }
        PoolKind::Max => {
            for (&idx, gv) in argmax.iter().zip(g) {
                gin[idx] += gv;
            }
        }
    }
    Tensor::from_parts(input_shape.to_vec(), gin)
}

/// How `b` lines up against `a` in [`elementwise`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Broadcast {
    Same,
    /// `b` is `[B,1,1,C]` against `a` of `[B,H,W,C]`.
    Channel {
        hw: usize,
        c: usize,
    },
}

pub(crate) fn broadcast_of(a: &Tensor, b: &Tensor) -> Result<Broadcast> {
    if a.shape() == b.shape() {
        return Ok(Broadcast::Same);
    }
    match (a.shape(), b.shape()) {
        (&[ab, h, w, c], &[bb, 1, 1, bc]) if ab == bb && c == bc => {
            Ok(Broadcast::Channel { hw: h * w, c })
        }
        (sa, sb) => shape_err(format!(
            "elementwise: incompatible shapes {sa:?} and {sb:?}"
        )),
    }
}

#[inline]
fn b_index(bc: Broadcast, idx: usize) -> usize {
    match bc {
        Broadcast::Same => idx,
        Broadcast::Channel { hw, c } => (idx / (hw * c)) * c + idx % c,
    }
}

/// `a ⊕ b` or `a ⊗ b`; `b` may be `[B,1,1,C]`, replicated over height and width.
pub fn elementwise(a: &Tensor, b: &Tensor, kind: ElementwiseKind) -> Result<Tensor> {
    let bc = broadcast_of(a, b)?;
    let bd = b.data();
    let out = a
        .data()
        .iter()
        .enumerate()
        .map(|(idx, &av)| {
            let bv = bd[b_index(bc, idx)];
            match kind {
                ElementwiseKind::Add => av + bv,
                ElementwiseKind::Mul => av * bv,
            }
        })
        .collect();
    Tensor::from_parts(a.shape().to_vec(), out).check_finite("elementwise output")
}

pub(crate) fn elementwise_backward(
    a: &Tensor,
    b: &Tensor,
    kind: ElementwiseKind,
    grad_out: &Tensor,
) -> Result<(Tensor, Tensor)> {
    let bc = broadcast_of(a, b)?;
    let g = grad_out.data();
    let (ad, bd) = (a.data(), b.data());
    let mut ga = vec![0.0; ad.len()];
    let mut gb = vec![0.0; bd.len()];
    for (idx, gv) in g.iter().enumerate() {
        let bi = b_index(bc, idx);
        match kind {
            ElementwiseKind::Add => {
                ga[idx] = *gv;
                gb[bi] += gv;
            }
            ElementwiseKind::Mul => {
                ga[idx] = gv * bd[bi];
                gb[bi] += gv * ad[idx];
            }
        }
    }
    Ok((
        Tensor::from_parts(a.shape().to_vec(), ga),
        Tensor::from_parts(b.shape().to_vec(), gb),
    ))
}

#[inline]
fn huber_term(r: f64, delta: f64) -> f64 {
    if r.abs() <= delta {
        0.5 * r * r
    } else {
        delta * (r.abs() - 0.5 * delta)
    }
}

/// Derivative of the per-element Huber term; bounded by `delta` in magnitude.
#[inline]
pub fn huber_derivative(r: f64, delta: f64) -> f64 {
    r.clamp(-delta, delta)
}

fn check_huber(pred: &Tensor, target: &Tensor, delta: f64) -> Result<()> {
    if pred.shape() != target.shape() {
        return shape_err(format!(
            "huber_loss: pred {:?} vs target {:?}",
            pred.shape(),
            target.shape()
        ));
    }
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "huber delta must be > 0, got {delta}"
        )));
    }
    if pred.is_empty() {
        return Err(Error::Empty("huber_loss over zero elements".into()));
    }
    Ok(())
}

/// Mean Huber loss over all elements.
pub fn huber_loss(pred: &Tensor, target: &Tensor, delta: f64) -> Result<f64> {
    check_huber(pred, target, delta)?;
    let sum: f64 = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(p, t)| huber_term(p - t, delta))
        .sum();
    Ok(sum / pred.len() as f64)
}

/// Gradients of [`huber_loss`] with respect to `pred` and `target`.
pub(crate) fn huber_backward(
    pred: &Tensor,
    target: &Tensor,
    delta: f64,
    upstream: f64,
) -> Result<(Tensor, Tensor)> {
    check_huber(pred, target, delta)?;
    let scale = upstream / pred.len() as f64;
    let gp: Vec<f64> = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(p, t)| huber_derivative(p - t, delta) * scale)
        .collect();
    let gt = gp.iter().map(|v| -v).collect();
    Ok((
        Tensor::from_parts(pred.shape().to_vec(), gp),
        Tensor::from_parts(target.shape().to_vec(), gt),
    ))
}
