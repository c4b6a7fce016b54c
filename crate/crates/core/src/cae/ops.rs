//! Layer primitives with explicit backward passes: 3×3 same-padded
//! convolution, non-overlapping max pooling, nearest-neighbour upsampling.

use crate::error::{Error, Result};

/// Dense `C × H × W` tensor, channel-major then row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(c: usize, h: usize, w: usize) -> Self {
        Tensor3 {
            c,
            h,
            w,
            data: vec![0.0; c * h * w],
        }
    }

    pub fn from_vec(c: usize, h: usize, w: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != c * h * w {
            return Err(Error::shape(format!("{c}x{h}x{w}"), data.len()));
        }
        Ok(Tensor3 { c, h, w, data })
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.c, self.h, self.w)
    }

    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.h * self.w;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn plane_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.h * self.w;
        &mut self.data[c * n..(c + 1) * n]
    }

    pub fn at(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.h + y) * self.w + x]
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

pub const KERNEL: usize = 3;

/// Parameters of one convolution: weights `out × in × 3 × 3`, biases `out`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    pub c_in: usize,
    pub c_out: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ConvLayer {
    pub fn zeros(c_in: usize, c_out: usize) -> Self {
        ConvLayer {
            c_in,
            c_out,
            weights: vec![0.0; c_out * c_in * KERNEL * KERNEL],
            bias: vec![0.0; c_out],
        }
    }

    #[inline]
    fn widx(&self, o: usize, i: usize, ky: usize, kx: usize) -> usize {
        ((o * self.c_in + i) * KERNEL + ky) * KERNEL + kx
    }

    pub fn n_params(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

/// Rows/columns of the output that a kernel tap at offset `d` touches,
/// for a spatial extent `n`: output index `o` reads input `o + d`.
#[inline]
fn valid_range(n: usize, d: isize) -> std::ops::Range<usize> {
    let lo = (-d).max(0) as usize;
    let hi = (n as isize - d.max(0)).max(0) as usize;
    lo..hi.max(lo)
}

/// Cross-correlation with one pixel of zero padding on every border, plus
/// bias. Activation is left to the caller.
pub fn conv2d(input: &Tensor3, layer: &ConvLayer) -> Result<Tensor3> {
    if input.c != layer.c_in {
        return Err(Error::shape(format!("{} input channels", layer.c_in), input.c));
    }
    let (h, w) = (input.h, input.w);
    let mut out = Tensor3::zeros(layer.c_out, h, w);
    for o in 0..layer.c_out {
        let out_plane = out.plane_mut(o);
        out_plane.fill(layer.bias[o]);
        for i in 0..layer.c_in {
            let in_plane = input.plane(i);
            for ky in 0..KERNEL {
                let dy = ky as isize - 1;
                let rows = valid_range(h, dy);
                for kx in 0..KERNEL {
                    let dx = kx as isize - 1;
                    let cols = valid_range(w, dx);
                    let wv = layer.weights[layer.widx(o, i, ky, kx)];
                    if wv == 0.0 {
                        continue;
                    }
                    for y in rows.clone() {
                        let sy = (y as isize + dy) as usize;
                        let src_start = (sy * w) as isize + cols.start as isize + dx;
                        let src = &in_plane[src_start as usize..src_start as usize + cols.len()];
                        let dst = &mut out_plane[y * w + cols.start..y * w + cols.end];
                        for (d, s) in dst.iter_mut().zip(src) {
                            *d += wv * s;
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Accumulates parameter gradients into `grad` and returns the gradient
/// with respect to the input (skipped when `need_input_grad` is false).
pub fn conv2d_backward(
    input: &Tensor3,
    layer: &ConvLayer,
    dout: &Tensor3,
    grad: &mut ConvLayer,
    need_input_grad: bool,
) -> Option<Tensor3> {
    let (h, w) = (input.h, input.w);
    let mut din = need_input_grad.then(|| Tensor3::zeros(layer.c_in, h, w));
    for o in 0..layer.c_out {
        let dplane = dout.plane(o);
        grad.bias[o] += dplane.iter().sum::<f64>();
        for i in 0..layer.c_in {
            let in_plane = input.plane(i);
            for ky in 0..KERNEL {
                let dy = ky as isize - 1;
                let rows = valid_range(h, dy);
                for kx in 0..KERNEL {
                    let dx = kx as isize - 1;
                    let cols = valid_range(w, dx);
                    let widx = layer.widx(o, i, ky, kx);
                    let wv = layer.weights[widx];
                    let mut acc = 0.0;
                    for y in rows.clone() {
                        let sy = (y as isize + dy) as usize;
                        let s0 = ((sy * w) as isize + cols.start as isize + dx) as usize;
                        let src = &in_plane[s0..s0 + cols.len()];
                        let g = &dplane[y * w + cols.start..y * w + cols.end];
                        acc += g.iter().zip(src).map(|(a, b)| a * b).sum::<f64>();
                        if let Some(din) = din.as_mut() {
                            if wv != 0.0 {
                                let dst = &mut din.plane_mut(i)[s0..s0 + cols.len()];
                                for (d, gv) in dst.iter_mut().zip(g) {
                                    *d += wv * gv;
                                }
                            }
                        }
                    }
                    grad.weights[widx] += acc;
                }
            }
        }
    }
    din
}

pub fn relu_inplace(t: &mut Tensor3) {
    t.data.iter_mut().for_each(|v| *v = v.max(0.0));
}

/// Zeroes gradient entries where the ReLU output was not positive.
pub fn relu_backward_inplace(grad: &mut Tensor3, activated: &Tensor3) {
    for (g, &a) in grad.data.iter_mut().zip(&activated.data) {
        if a <= 0.0 {
            *g = 0.0;
        }
    }
}

/// Non-overlapping `r × c` max pooling. Returns the pooled tensor and, per
/// output cell, the flat input index of the (first) maximum.
pub fn maxpool2d(input: &Tensor3, pool: (usize, usize)) -> Result<(Tensor3, Vec<usize>)> {
    let (r, c) = pool;
    if r == 0 || c == 0 || !input.h.is_multiple_of(r) || !input.w.is_multiple_of(c) {
        return Err(Error::shape(
            format!("spatial size divisible by {r}x{c}"),
            format!("{}x{}", input.h, input.w),
        ));
    }
    let (oh, ow) = (input.h / r, input.w / c);
    let mut out = Tensor3::zeros(input.c, oh, ow);
    let mut arg = vec![0usize; input.c * oh * ow];
    for ch in 0..input.c {
        let base = ch * input.h * input.w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = f64::NEG_INFINITY;
                let mut best_idx = 0;
                for dy in 0..r {
                    let row = base + (oy * r + dy) * input.w + ox * c;
                    for dx in 0..c {
                        let v = input.data[row + dx];
                        if v > best {
                            best = v;
                            best_idx = row + dx;
                        }
                    }
                }
                let o = (ch * oh + oy) * ow + ox;
                out.data[o] = best;
                arg[o] = best_idx;
            }
        }
    }
    Ok((out, arg))
}

pub fn maxpool2d_backward(dout: &Tensor3, argmax: &[usize], input_shape: (usize, usize, usize)) -> Tensor3 {
    let (c, h, w) = input_shape;
    let mut din = Tensor3::zeros(c, h, w);
    for (g, &idx) in dout.data.iter().zip(argmax) {
        din.data[idx] += g;
    }
    din
}

/// Nearest-neighbour upsampling: every value becomes an `r × c` block.
pub fn upsample2d(input: &Tensor3, factor: (usize, usize)) -> Tensor3 {
    let (r, c) = factor;
    let (oh, ow) = (input.h * r, input.w * c);
    let mut out = Tensor3::zeros(input.c, oh, ow);
    for ch in 0..input.c {
        for y in 0..oh {
            let src_row = (ch * input.h + y / r) * input.w;
            let dst_row = (ch * oh + y) * ow;
            for x in 0..ow {
                out.data[dst_row + x] = input.data[src_row + x / c];
            }
        }
    }
    out
}

pub fn upsample2d_backward(dout: &Tensor3, factor: (usize, usize)) -> Tensor3 {
    let (r, c) = factor;
    let (h, w) = (dout.h / r, dout.w / c);
    let mut din = Tensor3::zeros(dout.c, h, w);
    for ch in 0..dout.c {
        for y in 0..dout.h {
            let src_row = (ch * dout.h + y) * dout.w;
            let dst_row = (ch * h + y / r) * w;
            for x in 0..dout.w {
                din.data[dst_row + x / c] += dout.data[src_row + x];
            }
        }
    }
    din
}

/// Mean of squared differences over all elements.
pub fn mse_loss(output: &[f64], target: &[f64]) -> Result<f64> {
    if output.len() != target.len() {
        return Err(Error::shape(format!("{} elements", target.len()), output.len()));
    }
    if output.is_empty() {
        return Err(Error::invalid("mean squared error of empty tensors"));
    }
    let sum: f64 = output.iter().zip(target).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(sum / output.len() as f64)
}
