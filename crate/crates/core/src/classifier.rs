//! Glyph classifiers: the trained networks that activation maximization and
//! the perception engine probe.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::nn::{softmax_row, softmax_xent, Adam, Checkpoint, LayerSpec, Model, Tensor};
use crate::rng::SplitMix64;
use crate::synthdata::LabeledImageSet;

/// Width knobs of the two-conv-block classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClassifierArch {
    pub conv1: usize,
    pub conv2: usize,
    pub hidden: usize,
}

impl Default for ClassifierArch {
    fn default() -> Self {
        Self {
            conv1: 8,
            conv2: 16,
            hidden: 64,
        }
    }
}

impl ClassifierArch {
    /// conv3×3 → relu → pool → conv3×3 → relu → pool → dense → relu → dense.
    pub fn layers(&self, size: usize, classes: usize) -> Vec<LayerSpec> {
        let pooled = (size / 2) / 2;
        vec![
            LayerSpec::Conv2d {
                in_channels: 1,
                out_channels: self.conv1,
                kernel: 3,
                stride: 1,
                padding: 1,
            },
            LayerSpec::Relu,
            LayerSpec::MaxPool2,
            LayerSpec::Conv2d {
                in_channels: self.conv1,
                out_channels: self.conv2,
                kernel: 3,
                stride: 1,
                padding: 1,
            },
            LayerSpec::Relu,
            LayerSpec::MaxPool2,
            LayerSpec::Dense {
                inputs: self.conv2 * pooled * pooled,
                outputs: self.hidden,
            },
            LayerSpec::Relu,
            LayerSpec::Dense {
                inputs: self.hidden,
                outputs: classes,
            },
        ]
    }
}

/// Index of the first ReLU (the most peripheral non-linear layer).
pub const PERIPHERAL_LAYER: usize = 1;
/// Index of the last hidden ReLU.
pub const DEEP_LAYER: usize = 7;
/// Index of the logit layer.
pub const LOGIT_LAYER: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 32,
            lr: 2e-3,
            seed: 0,
        }
    }
}

/// A trained model plus the class names it predicts.
#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    pub model: Model,
    pub class_names: Vec<String>,
}

impl Classifier {
    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn probabilities(&self, image: &Tensor<f32>) -> Result<Vec<f32>> {
        let out = self.model.forward(image, false)?;
        Ok(softmax_row(out.output().data()))
    }

    pub fn predict(&self, image: &Tensor<f32>) -> Result<usize> {
        Ok(self.model.forward(image, false)?.output().argmax())
    }

    pub fn accuracy(&self, set: &LabeledImageSet) -> Result<f64> {
        let correct = set
            .images
            .par_iter()
            .zip(&set.labels)
            .map(|(img, &label)| self.predict(img).map(|p| usize::from(p == label)))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .sum::<usize>();
        Ok(correct as f64 / set.len() as f64)
    }

    pub fn class_index(&self, name: &str) -> Result<usize> {
        self.class_names
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::UnknownClass(name.to_string()))
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = self.model.to_checkpoint();
        ck.set("kind", "classifier");
        ck.set("classes", self.class_names.join(","));
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let model = Model::from_checkpoint(ck)?;
        let class_names: Vec<String> = ck.require("classes")?.split(',').map(str::to_string).collect();
        if model.output_dims() != [class_names.len()] {
            return Err(Error::Shape(format!(
                "classifier outputs {:?} but names {} classes",
                model.output_dims(),
                class_names.len()
            )));
        }
        Ok(Self { model, class_names })
    }
}

/// Per-epoch mean training loss.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub epoch_losses: Vec<f64>,
}

/// Mini-batch Adam on softmax cross-entropy. Per-sample gradients are
/// computed in parallel and summed in sample order, so results do not
/// depend on the thread count.
pub fn train_classifier(
    set: &LabeledImageSet,
    arch: ClassifierArch,
    cfg: &TrainConfig,
) -> Result<(Classifier, TrainReport)> {
    if set.is_empty() {
        return Err(Error::invalid("empty training set"));
    }
    if cfg.batch_size == 0 {
        return Err(Error::invalid("batch size must be positive"));
    }
    let size = set.images[0].dims()[2];
    let layers = arch.layers(size, set.num_classes());
    let mut model = Model::new(&[1, size, size], layers, cfg.seed)?;
    let adam = Adam::new(cfg.lr);
    let mut rng = SplitMix64::new(cfg.seed).split("classifier-order");
    let mut order: Vec<usize> = (0..set.len()).collect();
    let mut step = 0u64;
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);

    for _ in 0..cfg.epochs {
        rng.shuffle(&mut order);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let shared = &model;
            let results = batch
                .par_iter()
                .map(|&i| {
                    let trace = shared.forward(&set.images[i], true)?;
                    let (loss, g) = softmax_xent(trace.output(), set.labels[i])?;
                    let (_, grads) = shared.param_gradients(&trace, &g)?;
                    Ok((loss, grads))
                })
                .collect::<Result<Vec<_>>>()?;
            let scale = 1.0 / batch.len() as f32;
            model.zero_grad();
            for (loss, grads) in results {
                total += f64::from(loss);
                for (p, g) in model.params_mut().iter_mut().zip(grads) {
                    for (acc, v) in p.grad.data_mut().iter_mut().zip(g.data()) {
                        *acc += v * scale;
                    }
                }
            }
            step += 1;
            adam.step(model.params_mut(), step);
        }
        epoch_losses.push(total / set.len() as f64);
    }
    Ok((
        Classifier {
            model,
            class_names: set.class_names.clone(),
        },
        TrainReport { epoch_losses },
    ))
}
