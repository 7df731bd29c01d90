//! LSTM cell with gate order (input, forget, candidate, output).
//!
//! ```text
//! z = W_ih x + W_hh h_prev + b          z: [4H] = [z_i | z_f | z_g | z_o]
//! i = σ(z_i)  f = σ(z_f)  g = tanh(z_g)  o = σ(z_o)
//! c = f ⊙ c_prev + i ⊙ g
//! h = o ⊙ tanh(c)
//! ```
//!
//! Batched entry points operate on row-major `[B, ·]` buffers.

use crate::error::{Error, Result};

use super::tensor::{matmul, Real, Tensor};

fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

/// Borrowed view of LSTM weights.
#[derive(Debug, Clone, Copy)]
pub struct LstmCell<'a, T: Real = f32> {
    w_ih: &'a [T],
    w_hh: &'a [T],
    bias: &'a [T],
    inputs: usize,
    hidden: usize,
}

/// Everything a batched step needs to be differentiated.
#[derive(Debug, Clone)]
pub struct LstmStepCache<T: Real = f32> {
    pub batch: usize,
    pub x: Vec<T>,
    pub h_prev: Vec<T>,
    pub c_prev: Vec<T>,
    /// Activated gates `[B, 4H]`.
    pub gates: Vec<T>,
    pub c: Vec<T>,
    pub tanh_c: Vec<T>,
    pub h: Vec<T>,
}

/// Mutable gradient accumulators matching an [`LstmCell`].
pub struct LstmGrads<'a, T: Real = f32> {
    pub w_ih: &'a mut [T],
    pub w_hh: &'a mut [T],
    pub bias: &'a mut [T],
}

impl<'a, T: Real> LstmCell<'a, T> {
    pub fn new(w_ih: &'a Tensor<T>, w_hh: &'a Tensor<T>, bias: &'a Tensor<T>) -> Result<Self> {
        let (&[h4, inputs], &[h4b, hidden]) = (w_ih.dims(), w_hh.dims()) else {
            return Err(Error::Shape("lstm weights must be rank 2".into()));
        };
        if h4 % 4 != 0 || h4 != h4b || hidden * 4 != h4 || bias.dims() != [h4] {
            return Err(Error::Shape(format!(
                "inconsistent lstm weights {:?} {:?} {:?}",
                w_ih.dims(),
                w_hh.dims(),
                bias.dims()
            )));
        }
        Ok(Self::from_slices(
            w_ih.data(),
            w_hh.data(),
            bias.data(),
            inputs,
            hidden,
        ))
    }

    pub(crate) fn from_slices(
        w_ih: &'a [T],
        w_hh: &'a [T],
        bias: &'a [T],
        inputs: usize,
        hidden: usize,
    ) -> Self {
        debug_assert_eq!(w_ih.len(), 4 * hidden * inputs);
        debug_assert_eq!(w_hh.len(), 4 * hidden * hidden);
        Self {
            w_ih,
            w_hh,
            bias,
            inputs,
            hidden,
        }
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    /// Single unbatched step on vectors: returns `(h_t, c_t)`.
    pub fn step(
        &self,
        x: &Tensor<T>,
        h_prev: &Tensor<T>,
        c_prev: &Tensor<T>,
    ) -> Result<(Tensor<T>, Tensor<T>)> {
        if x.len() != self.inputs || h_prev.len() != self.hidden || c_prev.len() != self.hidden {
            return Err(Error::Shape(format!(
                "lstm step expects x[{}], h[{}], c[{}]; got {:?} {:?} {:?}",
                self.inputs,
                self.hidden,
                self.hidden,
                x.dims(),
                h_prev.dims(),
                c_prev.dims()
            )));
        }
        let cache = self.forward_batch(1, x.data(), h_prev.data(), c_prev.data());
        Ok((Tensor::vector(cache.h), Tensor::vector(cache.c)))
    }

    pub fn forward_batch(&self, batch: usize, x: &[T], h_prev: &[T], c_prev: &[T]) -> LstmStepCache<T> {
        let hd = self.hidden;
        let mut z = vec![T::zero(); batch * 4 * hd];
        for row in z.chunks_mut(4 * hd) {
            row.copy_from_slice(self.bias);
        }
        matmul(batch, self.inputs, 4 * hd, x, false, self.w_ih, true, &mut z, true);
        matmul(batch, hd, 4 * hd, h_prev, false, self.w_hh, true, &mut z, true);

        let mut c = vec![T::zero(); batch * hd];
        let mut tanh_c = vec![T::zero(); batch * hd];
        let mut h = vec![T::zero(); batch * hd];
        for b in 0..batch {
            let zr = &mut z[b * 4 * hd..(b + 1) * 4 * hd];
            for j in 0..hd {
                zr[j] = sigmoid(zr[j]);
                zr[hd + j] = sigmoid(zr[hd + j]);
                zr[2 * hd + j] = zr[2 * hd + j].tanh();
                zr[3 * hd + j] = sigmoid(zr[3 * hd + j]);
                let k = b * hd + j;
                c[k] = zr[hd + j] * c_prev[k] + zr[j] * zr[2 * hd + j];
                tanh_c[k] = c[k].tanh();
                h[k] = zr[3 * hd + j] * tanh_c[k];
            }
        }
        LstmStepCache {
            batch,
            x: x.to_vec(),
            h_prev: h_prev.to_vec(),
            c_prev: c_prev.to_vec(),
            gates: z,
            c,
            tanh_c,
            h,
        }
    }

    /// Backpropagate one step. `dh`/`dc` are gradients w.r.t. this step's
    /// outputs; returns `(dx, dh_prev, dc_prev)` and accumulates into `grads`.
    pub fn backward_batch(
        &self,
        cache: &LstmStepCache<T>,
        dh: &[T],
        dc: &[T],
        grads: &mut LstmGrads<'_, T>,
    ) -> (Vec<T>, Vec<T>, Vec<T>) {
        let (batch, hd) = (cache.batch, self.hidden);
        let one = T::one();
        let mut dz = vec![T::zero(); batch * 4 * hd];
        let mut dc_prev = vec![T::zero(); batch * hd];
        for b in 0..batch {
            let g = &cache.gates[b * 4 * hd..(b + 1) * 4 * hd];
            let dzr = &mut dz[b * 4 * hd..(b + 1) * 4 * hd];
            for j in 0..hd {
                let k = b * hd + j;
                let (i, f, gg, o) = (g[j], g[hd + j], g[2 * hd + j], g[3 * hd + j]);
                let tc = cache.tanh_c[k];
                let dct = dc[k] + dh[k] * o * (one - tc * tc);
                dzr[j] = dct * gg * i * (one - i);
                dzr[hd + j] = dct * cache.c_prev[k] * f * (one - f);
                dzr[2 * hd + j] = dct * i * (one - gg * gg);
                dzr[3 * hd + j] = dh[k] * tc * o * (one - o);
                dc_prev[k] = dct * f;
            }
        }
        let h4 = 4 * hd;
        matmul(h4, batch, self.inputs, &dz, true, &cache.x, false, grads.w_ih, true);
        matmul(h4, batch, hd, &dz, true, &cache.h_prev, false, grads.w_hh, true);
        for row in dz.chunks(h4) {
            for (acc, &d) in grads.bias.iter_mut().zip(row) {
                *acc += d;
            }
        }
        let mut dx = vec![T::zero(); batch * self.inputs];
        matmul(batch, h4, self.inputs, &dz, false, self.w_ih, false, &mut dx, false);
        let mut dh_prev = vec![T::zero(); batch * hd];
        matmul(batch, h4, hd, &dz, false, self.w_hh, false, &mut dh_prev, false);
        (dx, dh_prev, dc_prev)
    }
}

/// `(h_t, c_t)` for one step of `cell`.
pub fn lstm_step<T: Real>(
    cell: &LstmCell<'_, T>,
    x_t: &Tensor<T>,
    h_prev: &Tensor<T>,
    c_prev: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    cell.step(x_t, h_prev, c_prev)
}
