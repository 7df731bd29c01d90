//! Forward and backward kernels for each layer kind.

use super::tensor::{matmul, Real};

#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvGeom {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeom {
    pub fn new(input: &[usize], kernel: usize, stride: usize, padding: usize) -> Self {
        let (channels, height, width) = (input[0], input[1], input[2]);
        Self {
            channels,
            height,
            width,
            kernel,
            stride,
            padding,
            out_h: (height + 2 * padding - kernel) / stride + 1,
            out_w: (width + 2 * padding - kernel) / stride + 1,
        }
    }

    pub fn patch(&self) -> usize {
        self.channels * self.kernel * self.kernel
    }

    pub fn positions(&self) -> usize {
        self.out_h * self.out_w
    }

    /// Source pixel for patch row `(c, ki, kj)` at output `(oy, ox)`.
    #[inline]
    fn source(&self, ki: usize, kj: usize, oy: usize, ox: usize) -> Option<(usize, usize)> {
        let y = (oy * self.stride + ki).checked_sub(self.padding)?;
        let x = (ox * self.stride + kj).checked_sub(self.padding)?;
        (y < self.height && x < self.width).then_some((y, x))
    }
}

pub(crate) fn im2col<T: Real>(g: &ConvGeom, input: &[T]) -> Vec<T> {
    let p = g.positions();
    let mut cols = vec![T::zero(); g.patch() * p];
    for c in 0..g.channels {
        for ki in 0..g.kernel {
            for kj in 0..g.kernel {
                let row = (c * g.kernel + ki) * g.kernel + kj;
                let dst = &mut cols[row * p..(row + 1) * p];
                for oy in 0..g.out_h {
                    for ox in 0..g.out_w {
                        if let Some((y, x)) = g.source(ki, kj, oy, ox) {
                            dst[oy * g.out_w + ox] = input[(c * g.height + y) * g.width + x];
                        }
                    }
                }
            }
        }
    }
    cols
}

fn col2im<T: Real>(g: &ConvGeom, cols: &[T]) -> Vec<T> {
    let p = g.positions();
    let mut out = vec![T::zero(); g.channels * g.height * g.width];
    for c in 0..g.channels {
        for ki in 0..g.kernel {
            for kj in 0..g.kernel {
                let row = (c * g.kernel + ki) * g.kernel + kj;
                let src = &cols[row * p..(row + 1) * p];
                for oy in 0..g.out_h {
                    for ox in 0..g.out_w {
                        if let Some((y, x)) = g.source(ki, kj, oy, ox) {
                            out[(c * g.height + y) * g.width + x] += src[oy * g.out_w + ox];
                        }
                    }
                }
            }
        }
    }
    out
}

/// Returns `(output [O, P], im2col buffer)`.
pub(crate) fn conv_forward<T: Real>(
    g: &ConvGeom,
    input: &[T],
    weight: &[T],
    bias: &[T],
) -> (Vec<T>, Vec<T>) {
    let cols = im2col(g, input);
    let (o, p) = (bias.len(), g.positions());
    let mut out = vec![T::zero(); o * p];
    for (row, &b) in out.chunks_mut(p).zip(bias) {
        row.fill(b);
    }
    matmul(o, g.patch(), p, weight, false, &cols, false, &mut out, true);
    (out, cols)
}

/// Accumulates weight/bias gradients; returns the input gradient.
pub(crate) fn conv_backward<T: Real>(
    g: &ConvGeom,
    cols: &[T],
    weight: &[T],
    grad_out: &[T],
    grad_weight: Option<(&mut [T], &mut [T])>,
) -> Vec<T> {
    let p = g.positions();
    let o = grad_out.len() / p;
    if let Some((gw, gb)) = grad_weight {
        matmul(o, p, g.patch(), grad_out, false, cols, true, gw, true);
        for (acc, row) in gb.iter_mut().zip(grad_out.chunks(p)) {
            *acc += row.iter().copied().sum::<T>();
        }
    }
    let mut dcols = vec![T::zero(); g.patch() * p];
    matmul(g.patch(), o, p, weight, true, grad_out, false, &mut dcols, false);
    col2im(g, &dcols)
}

pub(crate) fn dense_forward<T: Real>(
    rows: usize,
    inputs: usize,
    outputs: usize,
    x: &[T],
    weight: &[T],
    bias: &[T],
) -> Vec<T> {
    let mut y = vec![T::zero(); rows * outputs];
    for row in y.chunks_mut(outputs) {
        row.copy_from_slice(bias);
    }
    matmul(rows, inputs, outputs, x, false, weight, true, &mut y, true);
    y
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn dense_backward<T: Real>(
    rows: usize,
    inputs: usize,
    outputs: usize,
    x: &[T],
    weight: &[T],
    grad_out: &[T],
    grad_weight: Option<(&mut [T], &mut [T])>,
) -> Vec<T> {
    if let Some((gw, gb)) = grad_weight {
        matmul(outputs, rows, inputs, grad_out, true, x, false, gw, true);
        for row in grad_out.chunks(outputs) {
            for (acc, &g) in gb.iter_mut().zip(row) {
                *acc += g;
            }
        }
    }
    let mut dx = vec![T::zero(); rows * inputs];
    matmul(rows, outputs, inputs, grad_out, false, weight, false, &mut dx, false);
    dx
}

/// Returns pooled values and, per output, the flat index of the winning input.
pub(crate) fn maxpool_forward<T: Real>(dims: &[usize], x: &[T]) -> (Vec<T>, Vec<usize>) {
    let (c, h, w) = (dims[0], dims[1], dims[2]);
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(c * oh * ow);
    let mut arg = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = (ch * h + 2 * oy) * w + 2 * ox;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = (ch * h + 2 * oy + dy) * w + 2 * ox + dx;
                    if x[idx] > x[best] {
                        best = idx;
                    }
                }
                out.push(x[best]);
                arg.push(best);
            }
        }
    }
    (out, arg)
}

pub(crate) fn maxpool_backward<T: Real>(input_len: usize, arg: &[usize], grad_out: &[T]) -> Vec<T> {
    let mut dx = vec![T::zero(); input_len];
    for (&i, &g) in arg.iter().zip(grad_out) {
        dx[i] += g;
    }
    dx
}

/// Numerically stable softmax of one row.
pub fn softmax_row<T: Real>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// `log Σ exp(z)` computed stably.
pub fn log_sum_exp<T: Real>(logits: &[T]) -> T {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    max + logits.iter().map(|&z| (z - max).exp()).sum::<T>().ln()
}

pub(crate) fn softmax_forward<T: Real>(last: usize, x: &[T]) -> Vec<T> {
    x.chunks(last).flat_map(softmax_row).collect()
}

pub(crate) fn softmax_backward<T: Real>(last: usize, y: &[T], grad_out: &[T]) -> Vec<T> {
    let mut dx = Vec::with_capacity(y.len());
    for (yr, gr) in y.chunks(last).zip(grad_out.chunks(last)) {
        let dot: T = yr.iter().zip(gr).map(|(&a, &b)| a * b).sum();
        dx.extend(yr.iter().zip(gr).map(|(&a, &b)| a * (b - dot)));
    }
    dx
}
