//! Content/style synthesis on a shallow convolutional net with frozen
//! random weights. Content is matched on raw feature maps, style on their
//! Gram matrices.

use crate::error::{Error, Result};
use crate::nn::{matmul, Checkpoint, LayerSpec, Model, Real, Tensor};

pub const DEFAULT_WIDTHS: [usize; 3] = [32, 64, 128];
pub const DEFAULT_KERNELS: [usize; 3] = [3, 5, 7];

/// Stack of conv+ReLU blocks (stride 1, same padding, no pooling) whose
/// weights are fixed at construction. Feature layer `l` is the output of
/// the `l`-th ReLU.
#[derive(Debug, Clone, PartialEq)]
pub struct StyleNet<T: Real = f32> {
    model: Model<T>,
}

impl StyleNet<f32> {
    /// Random net over `[channels, size, size]` images.
    pub fn random(channels: usize, size: usize, widths: &[usize], kernels: &[usize], seed: u64) -> Result<Self> {
        if widths.is_empty() || widths.len() != kernels.len() {
            return Err(Error::invalid(format!(
                "need one kernel per width, got {} widths and {} kernels",
                widths.len(),
                kernels.len()
            )));
        }
        let mut layers = Vec::with_capacity(2 * widths.len());
        let mut in_channels = channels;
        for (&w, &k) in widths.iter().zip(kernels) {
            if k % 2 == 0 {
                return Err(Error::invalid(format!("kernel {k} must be odd for same padding")));
            }
            layers.push(LayerSpec::Conv2d {
                in_channels,
                out_channels: w,
                kernel: k,
                stride: 1,
                padding: k / 2,
            });
            layers.push(LayerSpec::Relu);
            in_channels = w;
        }
        Self::from_model(Model::new(&[channels, size, size], layers, seed)?)
    }

    /// The default 3-block grayscale net (widths 32/64/128, kernels 3/5/7).
    pub fn default_net(size: usize, seed: u64) -> Result<Self> {
        Self::random(1, size, &DEFAULT_WIDTHS, &DEFAULT_KERNELS, seed)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = self.model.to_checkpoint();
        ck.set("kind", "stylenet");
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        Self::from_model(Model::from_checkpoint(ck)?)
    }
}

impl<T: Real> StyleNet<T> {
    /// Wrap an existing model after checking it is a same-size conv+ReLU stack.
    pub fn from_model(model: Model<T>) -> Result<Self> {
        let layers = model.layers();
        if layers.is_empty() || !layers.len().is_multiple_of(2) || model.input_dims().len() != 3 {
            return Err(Error::invalid("style net must be conv+relu blocks over [C, H, W] input"));
        }
        for (i, pair) in layers.chunks(2).enumerate() {
            let ok = matches!(
                pair,
                [LayerSpec::Conv2d { kernel, stride: 1, padding, .. }, LayerSpec::Relu]
                    if kernel % 2 == 1 && *padding == kernel / 2
            );
            if !ok {
                return Err(Error::LayerShape {
                    layer: 2 * i,
                    detail: "expected stride-1 same-padded conv followed by relu".into(),
                });
            }
        }
        Ok(Self { model })
    }

    pub fn model(&self) -> &Model<T> {
        &self.model
    }

    /// Number of feature layers (conv+ReLU blocks).
    pub fn depth(&self) -> usize {
        self.model.depth() / 2
    }

    pub fn cast<U: Real>(&self) -> StyleNet<U> {
        StyleNet { model: self.model.cast() }
    }

    /// Feature maps of every block.
    pub fn features(&self, image: &Tensor<T>) -> Result<Vec<Tensor<T>>> {
        let trace = self.model.forward(image, true)?;
        Ok((0..self.depth())
            .map(|l| trace.activations()[2 * l + 1].clone())
            .collect())
    }
}

/// `G[i][j] = Σ_p F[i][p]·F[j][p] / (C·H·W)` for a `[C, ...]` feature map.
pub fn gram<T: Real>(features: &Tensor<T>) -> Result<Tensor<T>> {
    let dims = features.dims();
    if dims.is_empty() {
        return Err(Error::Shape("gram needs a [C, ...] feature map".into()));
    }
    let c = dims[0];
    let p = features.len() / c;
    let mut g = vec![T::zero(); c * c];
    matmul(c, p, c, features.data(), false, features.data(), true, &mut g, false);
    let scale = T::of(1.0 / (c * p) as f64);
    // Copy the upper triangle down so symmetry is exact.
    for i in 0..c {
        for j in i..c {
            let v = g[i * c + j] * scale;
            g[i * c + j] = v;
            g[j * c + i] = v;
        }
    }
    Tensor::new(vec![c, c], g)
}

/// Weighted dual objective; layer indices refer to the net's feature layers.
#[derive(Debug, Clone, PartialEq)]
pub struct StyleObjective {
    pub content_layers: Vec<(usize, f64)>,
    pub style_layers: Vec<(usize, f64)>,
    pub alpha: f64,
    pub beta: f64,
}

impl StyleObjective {
    /// Content on the deepest layer, style on every layer with weight 1.
    pub fn for_net<T: Real>(net: &StyleNet<T>, alpha: f64, beta: f64) -> Self {
        let depth = net.depth();
        Self {
            content_layers: vec![(depth - 1, 1.0)],
            style_layers: (0..depth).map(|l| (l, 1.0)).collect(),
            alpha,
            beta,
        }
    }

    fn validate(&self, depth: usize) -> Result<()> {
        if !(self.alpha >= 0.0 && self.beta >= 0.0 && self.alpha + self.beta > 0.0) {
            return Err(Error::invalid("need alpha >= 0, beta >= 0 and alpha + beta > 0"));
        }
        for &(l, w) in self.content_layers.iter().chain(&self.style_layers) {
            if l >= depth {
                return Err(Error::OutOfRange { index: l, size: depth });
            }
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::invalid(format!("layer weight {w} must be non-negative")));
            }
        }
        Ok(())
    }
}

/// Precomputed content features and style Grams for repeated evaluation.
pub struct StyleTargets<'a, T: Real = f32> {
    net: &'a StyleNet<T>,
    obj: StyleObjective,
    content: Vec<(usize, f64, Tensor<T>)>,
    style: Vec<(usize, f64, Tensor<T>)>,
    dims: Vec<usize>,
    top: usize,
}

impl<'a, T: Real> StyleTargets<'a, T> {
    pub fn new(net: &'a StyleNet<T>, content_img: &Tensor<T>, style_img: &Tensor<T>, obj: &StyleObjective) -> Result<Self> {
        obj.validate(net.depth())?;
        if content_img.dims() != style_img.dims() {
            return Err(Error::Shape(format!(
                "content {:?} and style {:?} differ",
                content_img.dims(),
                style_img.dims()
            )));
        }
        let fc = net.features(content_img)?;
        let fs = net.features(style_img)?;
        let content = obj.content_layers.iter().map(|&(l, w)| (l, w, fc[l].clone())).collect();
        let style = obj
            .style_layers
            .iter()
            .map(|&(l, w)| Ok((l, w, gram(&fs[l])?)))
            .collect::<Result<_>>()?;
        let top = obj
            .content_layers
            .iter()
            .chain(&obj.style_layers)
            .map(|&(l, _)| l)
            .max()
            .unwrap_or(0);
        Ok(Self {
            net,
            obj: obj.clone(),
            content,
            style,
            dims: content_img.dims().to_vec(),
            top,
        })
    }

    /// Loss at `x`, with its input gradient when `with_grad` is set.
    pub fn evaluate(&self, x: &Tensor<T>, with_grad: bool) -> Result<(f64, Option<Tensor<T>>)> {
        if x.dims() != self.dims.as_slice() {
            return Err(Error::Shape(format!("image {:?} does not match targets {:?}", x.dims(), self.dims)));
        }
        let trace = self.net.model.forward_until(x, 2 * self.top + 2, true)?;
        let feature = |l: usize| &trace.activations()[2 * l + 1];
        let mut loss = 0.0;
        let mut injected: Vec<(usize, Tensor<T>)> = Vec::new();

        if self.obj.alpha > 0.0 {
            for (l, w, target) in &self.content {
                let f = feature(*l);
                let n = f.len() as f64;
                let mut sq = 0.0;
                let mut g = Tensor::zeros(f.dims());
                let k = T::of(2.0 * self.obj.alpha * w / n);
                for ((gv, &a), &b) in g.data_mut().iter_mut().zip(f.data()).zip(target.data()) {
                    let d = a - b;
                    sq += d.as_f64() * d.as_f64();
                    *gv = k * d;
                }
                loss += self.obj.alpha * w * sq / n;
                injected.push((2 * l + 1, g));
            }
        }
        if self.obj.beta > 0.0 {
            for (l, w, target) in &self.style {
                let f = feature(*l);
                let c = f.dims()[0];
                let p = f.len() / c;
                let g = gram(f)?;
                let mut sq = 0.0;
                let k = T::of(2.0 * self.obj.beta * w / (c * c) as f64);
                let mut dg = vec![T::zero(); c * c];
                for ((dv, &a), &b) in dg.iter_mut().zip(g.data()).zip(target.data()) {
                    let d = a - b;
                    sq += d.as_f64() * d.as_f64();
                    *dv = k * d;
                }
                loss += self.obj.beta * w * sq / (c * c) as f64;
                // dL/dF = (dG + dGᵀ)·F / (C·P), and dG is symmetric.
                let mut df = vec![T::zero(); f.len()];
                matmul(c, c, p, &dg, false, f.data(), false, &mut df, false);
                let scale = T::of(2.0 / (c * p) as f64);
                df.iter_mut().for_each(|v| *v *= scale);
                injected.push((2 * l + 1, Tensor::new(f.dims().to_vec(), df)?));
            }
        }
        if !with_grad {
            return Ok((loss, None));
        }
        let refs: Vec<(usize, &Tensor<T>)> = injected.iter().map(|(l, g)| (*l, g)).collect();
        let grad = self.net.model.input_gradient_multi(&trace, &refs)?;
        Ok((loss, Some(grad)))
    }
}

/// Loss and input gradient for one image.
pub fn style_content_loss<T: Real>(
    x: &Tensor<T>,
    content_img: &Tensor<T>,
    style_img: &Tensor<T>,
    net: &StyleNet<T>,
    obj: &StyleObjective,
) -> Result<(f64, Tensor<T>)> {
    let targets = StyleTargets::new(net, content_img, style_img, obj)?;
    let (loss, grad) = targets.evaluate(x, true)?;
    Ok((loss, grad.expect("gradient requested")))
}

/// Gram entries are normalised by C·H·W, so raw style gradients are small
/// and the default step is correspondingly large.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransferConfig {
    pub steps: usize,
    pub step_size: f64,
}

impl Default for TransferConfig {
    fn default() -> Self {
        Self {
            steps: 200,
            step_size: 1e5,
        }
    }
}

/// Line-search retries before a transfer gives up.
pub const MAX_HALVINGS: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct TransferResult {
    pub image: Tensor<f32>,
    /// Loss before the first step and after every step (`steps + 1`).
    pub trace: Vec<f64>,
    pub final_step_size: f64,
    pub stalled: bool,
}

/// Gradient descent from the content image with clamping to [0, 1]. A step
/// that raises the loss halves the step size and is retried; after
/// [`MAX_HALVINGS`] failures the run stops and the trace is padded.
pub fn transfer(
    content_img: &Tensor<f32>,
    style_img: &Tensor<f32>,
    net: &StyleNet,
    obj: &StyleObjective,
    cfg: &TransferConfig,
) -> Result<TransferResult> {
    if !(cfg.step_size > 0.0 && cfg.step_size.is_finite()) {
        return Err(Error::invalid("transfer step size must be positive"));
    }
    for img in [content_img, style_img] {
        if img.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::invalid("images must lie in [0, 1]"));
        }
    }
    let targets = StyleTargets::new(net, content_img, style_img, obj)?;
    let mut image = content_img.clone();
    let (mut loss, _) = targets.evaluate(&image, false)?;
    let mut trace = Vec::with_capacity(cfg.steps + 1);
    trace.push(loss);
    let mut step_size = cfg.step_size;
    let mut stalled = false;

    for _ in 0..cfg.steps {
        if loss == 0.0 {
            trace.push(loss);
            continue;
        }
        let grad = targets.evaluate(&image, true)?.1.expect("gradient requested");
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let lr = step_size as f32;
            let data = image
                .data()
                .iter()
                .zip(grad.data())
                .map(|(&x, &g)| (x - lr * g).clamp(0.0, 1.0))
                .collect();
            let candidate = Tensor::new(image.dims().to_vec(), data)?;
            let (l, _) = targets.evaluate(&candidate, false)?;
            if l <= loss {
                accepted = Some((candidate, l));
                break;
            }
            step_size *= 0.5;
        }
        match accepted {
            Some((candidate, l)) => {
                image = candidate;
                loss = l;
                trace.push(loss);
            }
            None => {
                stalled = true;
                break;
            }
        }
    }
    trace.resize(cfg.steps + 1, loss);
    Ok(TransferResult {
        image,
        trace,
        final_step_size: step_size,
        stalled,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    fn pixel_net() -> StyleNet {
        let spec = LayerSpec::Conv2d {
            in_channels: 1,
            out_channels: 1,
            kernel: 1,
            stride: 1,
            padding: 0,
        };
        let mut m = Model::new(&[1, 2, 2], vec![spec, LayerSpec::Relu], 0).unwrap();
        m.params_mut()[0].value.fill(1.0);
        m.params_mut()[1].value.fill(0.0);
        StyleNet::from_model(m).unwrap()
    }

    fn img(v: [f32; 4]) -> Tensor {
        Tensor::new(vec![1, 2, 2], v.to_vec()).unwrap()
    }

    #[test]
    fn gram_of_constant_single_filter_is_one() {
        let g = gram(&Tensor::<f32>::filled(&[1, 3, 5], 1.0)).unwrap();
        assert_eq!(g.data(), &[1.0]);
    }

    #[test]
    fn orthogonal_filters_have_zero_cross_terms() {
        let f = Tensor::<f32>::new(vec![2, 1, 4], vec![1.0, 0.0, 2.0, 0.0, 0.0, 3.0, 0.0, 1.0]).unwrap();
        let g = gram(&f).unwrap();
        assert_eq!(g.data()[1], 0.0);
        assert_eq!(g.data()[2], 0.0);
        assert!((g.data()[0] - 5.0 / 8.0).abs() < 1e-7);
        assert!((g.data()[3] - 10.0 / 8.0).abs() < 1e-7);
    }

    #[test]
    fn one_by_one_net_hand_computed() {
        let net = pixel_net();
        let x = img([0.2, 0.4, 0.6, 0.8]);
        let content = img([0.0, 0.5, 0.5, 1.0]);
        let style = img([1.0, 1.0, 0.0, 0.0]);
        let obj = StyleObjective {
            content_layers: vec![(0, 1.0)],
            style_layers: vec![(0, 1.0)],
            alpha: 2.0,
            beta: 3.0,
        };
        let (loss, grad) = style_content_loss(&x, &content, &style, &net, &obj).unwrap();
        // MSE(x, c) = (0.04 + 0.01 + 0.01 + 0.04) / 4 = 0.025
        // gram(x) = (0.04 + 0.16 + 0.36 + 0.64) / 4 = 0.3, gram(s) = 0.5
        let expect = 2.0 * 0.025 + 3.0 * (0.3f64 - 0.5).powi(2);
        assert!((loss - expect).abs() < 1e-6, "{loss} vs {expect}");
        // d/dx_i = α·2(x_i − c_i)/4 + β·2(g − g_s)·2x_i/4
        for (i, (&xi, &ci)) in x.data().iter().zip(content.data()).enumerate() {
            let (xi, ci) = (f64::from(xi), f64::from(ci));
            let d = 2.0 * 2.0 * (xi - ci) / 4.0 + 3.0 * 2.0 * (0.3 - 0.5) * 2.0 * xi / 4.0;
            assert!((f64::from(grad.data()[i]) - d).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_loss_at_shared_targets() {
        let net = pixel_net();
        let a = img([0.1, 0.9, 0.3, 0.7]);
        let obj = StyleObjective::for_net(&net, 1.0, 1.0);
        assert_eq!(style_content_loss(&a, &a, &a, &net, &obj).unwrap().0, 0.0);
        let pure_content = StyleObjective { beta: 0.0, ..obj };
        let other = img([0.5, 0.5, 0.0, 1.0]);
        assert_eq!(style_content_loss(&a, &a, &other, &net, &pure_content).unwrap().0, 0.0);
    }

    #[test]
    fn loss_zero_iff_targets_met_on_pixel_net() {
        // Same Gram (sum of squares) with a different content gives positive loss.
        let net = pixel_net();
        let obj = StyleObjective::for_net(&net, 1.0, 1.0);
        let x = img([0.5, 0.75, 0.0, 0.0]);
        let style = img([0.0, 0.0, 0.75, 0.5]);
        let (l_style, _) = style_content_loss(&x, &style, &style, &net, &StyleObjective { alpha: 0.0, ..obj.clone() }).unwrap();
        assert_eq!(l_style, 0.0);
        assert!(style_content_loss(&x, &style, &style, &net, &obj).unwrap().0 > 0.0);
    }

    #[test]
    fn objective_validation() {
        let net = pixel_net();
        let a = img([0.1; 4]);
        let mut obj = StyleObjective::for_net(&net, 0.0, 0.0);
        assert!(style_content_loss(&a, &a, &a, &net, &obj).is_err());
        obj.alpha = 1.0;
        obj.style_layers.push((1, 1.0));
        assert!(style_content_loss(&a, &a, &a, &net, &obj).is_err());
        let obj = StyleObjective::for_net(&net, 1.0, 0.0);
        let big = Tensor::filled(&[1, 3, 3], 0.1);
        assert!(style_content_loss(&a, &a, &big, &net, &obj).is_err());
    }

    #[test]
    fn rejects_non_style_architectures() {
        let m = Model::<f32>::new(&[1, 4, 4], vec![LayerSpec::Relu], 0).unwrap();
        assert!(StyleNet::from_model(m).is_err());
        assert!(StyleNet::random(1, 8, &[4], &[2], 0).is_err());
        assert!(StyleNet::random(1, 8, &[4, 8], &[3], 0).is_err());
    }

    #[test]
    fn default_net_keeps_spatial_size() {
        let net = StyleNet::default_net(12, 1).unwrap();
        assert_eq!(net.depth(), 3);
        let feats = net.features(&Tensor::filled(&[1, 12, 12], 0.5)).unwrap();
        let widths: Vec<_> = feats.iter().map(|f| f.dims().to_vec()).collect();
        assert_eq!(widths, vec![vec![32, 12, 12], vec![64, 12, 12], vec![128, 12, 12]]);
    }

    #[test]
    fn transfer_zero_steps_and_fixed_point() {
        let net = StyleNet::random(1, 6, &[4, 4], &[3, 3], 2).unwrap();
        let mut rng = SplitMix64::new(3);
        let a = Tensor::new(vec![1, 6, 6], (0..36).map(|_| rng.next_f64() as f32).collect()).unwrap();
        let b = Tensor::filled(&[1, 6, 6], 0.3);
        let obj = StyleObjective::for_net(&net, 1.0, 1.0);
        let r = transfer(&a, &b, &net, &obj, &TransferConfig { steps: 0, step_size: 1.0 }).unwrap();
        assert_eq!(r.image, a);
        assert_eq!(r.trace.len(), 1);
        let r = transfer(&a, &a, &net, &obj, &TransferConfig { steps: 5, step_size: 1.0 }).unwrap();
        assert_eq!(r.image, a);
        assert_eq!(r.trace, vec![0.0; 6]);
    }
}
