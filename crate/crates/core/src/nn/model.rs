use crate::error::{Error, Result};
use crate::rng::SplitMix64;

use super::layer::{infer_shapes, LayerSpec};
use super::lstm::{LstmCell, LstmGrads, LstmStepCache};
use super::ops::{self, ConvGeom};
use super::tensor::{Real, Tensor};

/// A named trainable tensor with its gradient and Adam moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameter<T: Real = f32> {
    pub name: String,
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
    pub m: Tensor<T>,
    pub v: Tensor<T>,
}

impl<T: Real> Parameter<T> {
    pub fn new(name: impl Into<String>, value: Tensor<T>) -> Self {
        let zeros = Tensor::zeros(value.dims());
        Self {
            name: name.into(),
            grad: zeros.clone(),
            m: zeros.clone(),
            v: zeros,
            value,
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(T::zero());
    }

    pub fn cast<U: Real>(&self) -> Parameter<U> {
        Parameter {
            name: self.name.clone(),
            value: self.value.cast(),
            grad: self.grad.cast(),
            m: self.m.cast(),
            v: self.v.cast(),
        }
    }
}

/// Per-layer intermediate state kept for the backward pass.
#[derive(Debug, Clone)]
enum LayerAux<T: Real> {
    None,
    Cols(Vec<T>),
    Argmax(Vec<usize>),
    Lstm(Vec<LstmStepCache<T>>),
}

/// Result of [`Model::forward`].
#[derive(Debug, Clone)]
pub struct ActivationTrace<T: Real = f32> {
    input: Tensor<T>,
    activations: Vec<Tensor<T>>,
    aux: Vec<LayerAux<T>>,
    output: Tensor<T>,
    recorded: bool,
}

impl<T: Real> ActivationTrace<T> {
    pub fn output(&self) -> &Tensor<T> {
        &self.output
    }

    pub fn input(&self) -> &Tensor<T> {
        &self.input
    }

    pub fn is_recorded(&self) -> bool {
        self.recorded
    }

    /// Output of layer `index`; only available on recorded traces.
    pub fn activation(&self, index: usize) -> Option<&Tensor<T>> {
        self.activations.get(index)
    }

    pub fn activations(&self) -> &[Tensor<T>] {
        &self.activations
    }
}

/// Ordered stack of layers and their parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Model<T: Real = f32> {
    input_dims: Vec<usize>,
    layers: Vec<LayerSpec>,
    params: Vec<Parameter<T>>,
    /// `(first parameter index, count)` per layer.
    slots: Vec<(usize, usize)>,
    seed: u64,
}

fn init_layer<T: Real>(index: usize, spec: &LayerSpec, rng: &mut SplitMix64) -> Vec<Parameter<T>> {
    let mut params = Vec::new();
    for shape in spec.param_shapes() {
        let n: usize = shape.dims.iter().product();
        let name = format!("layer{index}.{}", shape.suffix);
        // Uniform with the requested standard deviation: U(-√3σ, √3σ).
        let mut uniform = |std: f64| -> Vec<T> {
            let a = 3f64.sqrt() * std;
            (0..n).map(|_| T::of(rng.uniform(-a, a))).collect()
        };
        let data = match (spec, shape.suffix) {
            (_, "bias") => {
                let mut b = vec![T::zero(); n];
                if let LayerSpec::Lstm { hidden, .. } = spec {
                    b[*hidden..2 * hidden].fill(T::one());
                }
                b
            }
            (LayerSpec::Dense { inputs, .. }, _) => uniform((2.0 / *inputs as f64).sqrt()),
            (
                LayerSpec::Conv2d {
                    in_channels,
                    kernel,
                    ..
                },
                _,
            ) => uniform((2.0 / (in_channels * kernel * kernel) as f64).sqrt()),
            (LayerSpec::Lstm { inputs, hidden }, _) => {
                uniform((1.0 / (inputs + hidden) as f64).sqrt())
            }
            (LayerSpec::Embedding { dim, .. }, _) => uniform((1.0 / *dim as f64).sqrt()),
            _ => unreachable!("parameterless layer has no shapes"),
        };
        let value = Tensor::new(shape.dims.clone(), data).expect("init shape");
        params.push(Parameter::new(name, value));
    }
    params
}

impl<T: Real> Model<T> {
    /// Build and initialise a model; every layer draws from its own stream
    /// split off `seed`, so the result is a pure function of the arguments.
    pub fn new(input_dims: &[usize], layers: Vec<LayerSpec>, seed: u64) -> Result<Self> {
        if input_dims.is_empty() || input_dims.contains(&0) {
            return Err(Error::Shape(format!("bad model input dims {input_dims:?}")));
        }
        infer_shapes(&layers, input_dims)?;
        let mut rng = SplitMix64::new(seed);
        let mut params = Vec::new();
        let mut slots = Vec::with_capacity(layers.len());
        for (i, spec) in layers.iter().enumerate() {
            let mut layer_rng = rng.split(&format!("layer{i}"));
            let p = init_layer(i, spec, &mut layer_rng);
            slots.push((params.len(), p.len()));
            params.extend(p);
        }
        Ok(Self {
            input_dims: input_dims.to_vec(),
            layers,
            params,
            slots,
            seed,
        })
    }

    /// Rebuild from explicit parameter values (e.g. a checkpoint).
    pub fn from_parts(
        input_dims: &[usize],
        layers: Vec<LayerSpec>,
        seed: u64,
        values: Vec<(String, Tensor<T>)>,
    ) -> Result<Self> {
        let mut model = Self::new(input_dims, layers, seed)?;
        if values.len() != model.params.len() {
            return Err(Error::Shape(format!(
                "expected {} parameter tensors, got {}",
                model.params.len(),
                values.len()
            )));
        }
        for (p, (name, value)) in model.params.iter_mut().zip(values) {
            if p.name != name || p.value.dims() != value.dims() {
                return Err(Error::Shape(format!(
                    "parameter {name} {:?} does not match {} {:?}",
                    value.dims(),
                    p.name,
                    p.value.dims()
                )));
            }
            *p = Parameter::new(name, value);
        }
        Ok(model)
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn input_dims(&self) -> &[usize] {
        &self.input_dims
    }

    /// Output dims of every layer for the declared input.
    pub fn layer_dims(&self) -> Vec<Vec<usize>> {
        infer_shapes(&self.layers, &self.input_dims).expect("validated at construction")
    }

    pub fn output_dims(&self) -> Vec<usize> {
        self.layer_dims()
            .pop()
            .unwrap_or_else(|| self.input_dims.clone())
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn params(&self) -> &[Parameter<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Parameter<T>] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn layer_params(&self, layer: usize) -> &[Parameter<T>] {
        let (start, n) = self.slots[layer];
        &self.params[start..start + n]
    }

    pub fn zero_grad(&mut self) {
        self.params.iter_mut().for_each(Parameter::zero_grad);
    }

    pub fn cast<U: Real>(&self) -> Model<U> {
        Model {
            input_dims: self.input_dims.clone(),
            layers: self.layers.clone(),
            params: self.params.iter().map(Parameter::cast).collect(),
            slots: self.slots.clone(),
            seed: self.seed,
        }
    }

    /// Run every layer. With `record` the per-layer activations and
    /// backward caches are kept; otherwise only the final output.
    pub fn forward(&self, input: &Tensor<T>, record: bool) -> Result<ActivationTrace<T>> {
        self.forward_until(input, self.layers.len(), record)
    }

    /// Run layers `0..end` only.
    pub fn forward_until(
        &self,
        input: &Tensor<T>,
        end: usize,
        record: bool,
    ) -> Result<ActivationTrace<T>> {
        if end > self.layers.len() {
            return Err(Error::OutOfRange {
                index: end,
                size: self.layers.len(),
            });
        }
        let mut activations = Vec::new();
        let mut aux = Vec::new();
        let mut current = input.clone();
        for i in 0..end {
            let dims = self.layers[i]
                .output_dims(current.dims())
                .map_err(|detail| Error::LayerShape { layer: i, detail })?;
            let (data, layer_aux) = self.forward_layer(i, &current, record)?;
            let next = Tensor::new(dims, data)?;
            if record {
                activations.push(next.clone());
                aux.push(layer_aux);
            }
            current = next;
        }
        if !current.all_finite() {
            return Err(Error::NonFinite("model output".into()));
        }
        Ok(ActivationTrace {
            input: input.clone(),
            activations,
            aux,
            output: current,
            recorded: record,
        })
    }

    fn forward_layer(&self, i: usize, x: &Tensor<T>, record: bool) -> Result<(Vec<T>, LayerAux<T>)> {
        let p = self.layer_params(i);
        let data = x.data();
        Ok(match self.layers[i] {
            LayerSpec::Dense { inputs, outputs } => {
                let rows = data.len() / inputs;
                let y = ops::dense_forward(rows, inputs, outputs, data, p[0].value.data(), p[1].value.data());
                (y, LayerAux::None)
            }
            LayerSpec::Conv2d {
                kernel,
                stride,
                padding,
                ..
            } => {
                let g = ConvGeom::new(x.dims(), kernel, stride, padding);
                let (y, cols) = ops::conv_forward(&g, data, p[0].value.data(), p[1].value.data());
                (y, if record { LayerAux::Cols(cols) } else { LayerAux::None })
            }
            LayerSpec::Relu => (
                data.iter().map(|&v| v.max(T::zero())).collect(),
                LayerAux::None,
            ),
            LayerSpec::MaxPool2 => {
                let (y, arg) = ops::maxpool_forward(x.dims(), data);
                (y, LayerAux::Argmax(arg))
            }
            LayerSpec::Softmax => {
                let last = *x.dims().last().expect("rank >= 1");
                (ops::softmax_forward(last, data), LayerAux::None)
            }
            LayerSpec::Lstm { inputs, hidden } => {
                let cell = LstmCell::from_slices(
                    p[0].value.data(),
                    p[1].value.data(),
                    p[2].value.data(),
                    inputs,
                    hidden,
                );
                let mut h = vec![T::zero(); hidden];
                let mut c = vec![T::zero(); hidden];
                let mut out = Vec::with_capacity(data.len() / inputs * hidden);
                let mut caches = Vec::new();
                for xt in data.chunks(inputs) {
                    let cache = cell.forward_batch(1, xt, &h, &c);
                    out.extend_from_slice(&cache.h);
                    h.clone_from(&cache.h);
                    c.clone_from(&cache.c);
                    if record {
                        caches.push(cache);
                    }
                }
                (out, LayerAux::Lstm(caches))
            }
            LayerSpec::Embedding { vocab, dim } => {
                let table = p[0].value.data();
                let mut out = Vec::with_capacity(data.len() * dim);
                for &t in data {
                    let idx = token_index(t, vocab).ok_or_else(|| Error::LayerShape {
                        layer: i,
                        detail: format!("token {t} not an index below {vocab}"),
                    })?;
                    out.extend_from_slice(&table[idx * dim..(idx + 1) * dim]);
                }
                (out, LayerAux::None)
            }
        })
    }

    /// Backpropagate `out_grad` through the whole model, accumulating into
    /// every `Parameter::grad`; returns the gradient w.r.t. the input.
    pub fn backward(&mut self, trace: &ActivationTrace<T>, out_grad: &Tensor<T>) -> Result<Tensor<T>> {
        let mut grads: Vec<Tensor<T>> = self
            .params
            .iter_mut()
            .map(|p| std::mem::replace(&mut p.grad, Tensor::zeros(&[1])))
            .collect();
        let result = self.backward_impl(trace, out_grad, Some(&mut grads));
        for (p, g) in self.params.iter_mut().zip(grads) {
            p.grad = g;
        }
        result
    }

    /// Like [`Model::backward`] but returns fresh parameter gradients
    /// instead of accumulating, so it can run on a shared model.
    pub fn param_gradients(
        &self,
        trace: &ActivationTrace<T>,
        out_grad: &Tensor<T>,
    ) -> Result<(Tensor<T>, Vec<Tensor<T>>)> {
        let mut grads: Vec<Tensor<T>> = self
            .params
            .iter()
            .map(|p| Tensor::zeros(p.value.dims()))
            .collect();
        let input_grad = self.backward_impl(trace, out_grad, Some(&mut grads))?;
        Ok((input_grad, grads))
    }

    /// Gradient w.r.t. the input only; parameters are untouched. The trace
    /// may be partial (from [`Model::forward_until`]).
    pub fn input_gradient(&self, trace: &ActivationTrace<T>, out_grad: &Tensor<T>) -> Result<Tensor<T>> {
        self.backward_impl(trace, out_grad, None)
    }

    /// Input gradient of a scalar whose partial derivatives with respect to
    /// several layer outputs are given as `(layer, grad)` pairs. Only layers
    /// up to the deepest injection are traversed.
    pub fn input_gradient_multi(
        &self,
        trace: &ActivationTrace<T>,
        injected: &[(usize, &Tensor<T>)],
    ) -> Result<Tensor<T>> {
        if !trace.recorded {
            return Err(Error::TraceMissing);
        }
        let depth = trace.activations.len();
        for &(layer, g) in injected {
            if layer >= depth {
                return Err(Error::OutOfRange { index: layer, size: depth });
            }
            if g.dims() != trace.activations[layer].dims() {
                return Err(Error::Shape(format!(
                    "gradient {:?} does not match layer {layer} output {:?}",
                    g.dims(),
                    trace.activations[layer].dims()
                )));
            }
        }
        let Some(top) = injected.iter().map(|&(l, _)| l).max() else {
            return Ok(Tensor::zeros(trace.input.dims()));
        };
        let mut grad = vec![T::zero(); trace.activations[top].len()];
        for i in (0..=top).rev() {
            for &(_, g) in injected.iter().filter(|&&(l, _)| l == i) {
                for (acc, &v) in grad.iter_mut().zip(g.data()) {
                    *acc += v;
                }
            }
            let input = if i == 0 { &trace.input } else { &trace.activations[i - 1] };
            let (start, n) = self.slots[i];
            let p = &self.params[start..start + n];
            grad = self.backward_layer(i, input, &trace.activations[i], &trace.aux[i], p, &grad, None)?;
        }
        Tensor::new(trace.input.dims().to_vec(), grad)
    }

    fn backward_impl(
        &self,
        trace: &ActivationTrace<T>,
        out_grad: &Tensor<T>,
        mut grads: Option<&mut Vec<Tensor<T>>>,
    ) -> Result<Tensor<T>> {
        if !trace.recorded {
            return Err(Error::TraceMissing);
        }
        if out_grad.dims() != trace.output.dims() {
            return Err(Error::Shape(format!(
                "output gradient {:?} does not match output {:?}",
                out_grad.dims(),
                trace.output.dims()
            )));
        }
        let depth = trace.activations.len();
        let mut grad = out_grad.data().to_vec();
        for i in (0..depth).rev() {
            let input = if i == 0 { &trace.input } else { &trace.activations[i - 1] };
            let output = &trace.activations[i];
            let (start, n) = self.slots[i];
            let p = &self.params[start..start + n];
            let g_slice = grads.as_deref_mut().map(|g| &mut g[start..start + n]);
            grad = self.backward_layer(i, input, output, &trace.aux[i], p, &grad, g_slice)?;
        }
        Tensor::new(trace.input.dims().to_vec(), grad)
    }

    #[allow(clippy::too_many_arguments)]
    fn backward_layer(
        &self,
        i: usize,
        input: &Tensor<T>,
        output: &Tensor<T>,
        aux: &LayerAux<T>,
        p: &[Parameter<T>],
        grad: &[T],
        pgrads: Option<&mut [Tensor<T>]>,
    ) -> Result<Vec<T>> {
        let x = input.data();
        Ok(match (self.layers[i], aux) {
            (LayerSpec::Dense { inputs, outputs }, _) => {
                let rows = x.len() / inputs;
                let gw = pgrads.map(|g| {
                    let (w, b) = g.split_at_mut(1);
                    (w[0].data_mut(), b[0].data_mut())
                });
                ops::dense_backward(rows, inputs, outputs, x, p[0].value.data(), grad, gw)
            }
            (
                LayerSpec::Conv2d {
                    kernel,
                    stride,
                    padding,
                    ..
                },
                LayerAux::Cols(cols),
            ) => {
                let g = ConvGeom::new(input.dims(), kernel, stride, padding);
                let gw = pgrads.map(|g| {
                    let (w, b) = g.split_at_mut(1);
                    (w[0].data_mut(), b[0].data_mut())
                });
                ops::conv_backward(&g, cols, p[0].value.data(), grad, gw)
            }
            (LayerSpec::Relu, _) => x
                .iter()
                .zip(grad)
                .map(|(&v, &g)| if v > T::zero() { g } else { T::zero() })
                .collect(),
            (LayerSpec::MaxPool2, LayerAux::Argmax(arg)) => ops::maxpool_backward(x.len(), arg, grad),
            (LayerSpec::Softmax, _) => {
                let last = *output.dims().last().expect("rank >= 1");
                ops::softmax_backward(last, output.data(), grad)
            }
            (LayerSpec::Lstm { inputs, hidden }, LayerAux::Lstm(caches)) => {
                let cell = LstmCell::from_slices(
                    p[0].value.data(),
                    p[1].value.data(),
                    p[2].value.data(),
                    inputs,
                    hidden,
                );
                let mut scratch;
                let mut grads = match pgrads {
                    Some(g) => {
                        let (a, rest) = g.split_at_mut(1);
                        let (b, c) = rest.split_at_mut(1);
                        LstmGrads {
                            w_ih: a[0].data_mut(),
                            w_hh: b[0].data_mut(),
                            bias: c[0].data_mut(),
                        }
                    }
                    None => {
                        scratch = [
                            vec![T::zero(); 4 * hidden * inputs],
                            vec![T::zero(); 4 * hidden * hidden],
                            vec![T::zero(); 4 * hidden],
                        ];
                        let [a, b, c] = &mut scratch;
                        LstmGrads {
                            w_ih: a,
                            w_hh: b,
                            bias: c,
                        }
                    }
                };
                let steps = caches.len();
                let mut dx = vec![T::zero(); steps * inputs];
                let mut dh_next = vec![T::zero(); hidden];
                let mut dc_next = vec![T::zero(); hidden];
                for t in (0..steps).rev() {
                    let dh: Vec<T> = grad[t * hidden..(t + 1) * hidden]
                        .iter()
                        .zip(&dh_next)
                        .map(|(&a, &b)| a + b)
                        .collect();
                    let (dxt, dhp, dcp) = cell.backward_batch(&caches[t], &dh, &dc_next, &mut grads);
                    dx[t * inputs..(t + 1) * inputs].copy_from_slice(&dxt);
                    dh_next = dhp;
                    dc_next = dcp;
                }
                dx
            }
            (LayerSpec::Embedding { vocab, dim }, _) => {
                if let Some(g) = pgrads {
                    let table = g[0].data_mut();
                    for (t, gr) in x.iter().zip(grad.chunks(dim)) {
                        let idx = token_index(*t, vocab).expect("validated in forward");
                        for (acc, &v) in table[idx * dim..(idx + 1) * dim].iter_mut().zip(gr) {
                            *acc += v;
                        }
                    }
                }
                // Token indices are not differentiable.
                vec![T::zero(); x.len()]
            }
            _ => return Err(Error::TraceMissing),
        })
    }
}

fn token_index<T: Real>(t: T, vocab: usize) -> Option<usize> {
    let v = t.as_f64();
    (v >= 0.0 && v.fract() == 0.0 && (v as usize) < vocab).then_some(v as usize)
}
