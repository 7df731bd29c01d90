use crate::error::{Error, Result};

use super::layer::LayerSpec;
use super::model::Model;
use super::tensor::{Real, Tensor};
use crate::rng::SplitMix64;

/// Largest parameter count the finite-difference harness accepts.
pub const MAX_CHECK_PARAMS: usize = 10_000;

/// Magnitude below which errors are measured absolutely rather than relatively.
const REL_FLOOR: f64 = 1e-3;

/// `|a - n| / max(|a|, |n|, 1e-3)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

fn half_square_loss(out: &Tensor<f64>) -> f64 {
    0.5 * out.data().iter().map(|v| v * v).sum::<f64>()
}

/// Compare analytic gradients (computed in `T`) with central differences of
/// the loss `½‖f(x)‖²` recomputed in 64-bit, over every parameter and
/// every input element. Returns the worst relative error.
pub fn grad_check<T: Real>(model: &Model<T>, input: &Tensor<T>, eps: f64) -> Result<f64> {
    if !(eps.is_finite() && eps > 0.0) {
        return Err(Error::invalid(format!("gradient-check eps must be > 0, got {eps}")));
    }
    if model.param_count() > MAX_CHECK_PARAMS {
        return Err(Error::invalid(format!(
            "model has {} parameters; gradient check limited to {MAX_CHECK_PARAMS}",
            model.param_count()
        )));
    }

    let mut analytic_model = model.clone();
    analytic_model.zero_grad();
    let trace = analytic_model.forward(input, true)?;
    let out_grad = trace.output().clone();
    let input_grad = analytic_model.backward(&trace, &out_grad)?;

    let mut probe = model.cast::<f64>();
    let x = input.cast::<f64>();
    let loss_at = |m: &Model<f64>, x: &Tensor<f64>| -> Result<f64> {
        let loss = half_square_loss(m.forward(x, false)?.output());
        if loss.is_finite() {
            Ok(loss)
        } else {
            Err(Error::NonFinite("gradient-check loss".into()))
        }
    };
    loss_at(&probe, &x)?;

    let mut worst = 0.0f64;
    for pi in 0..probe.params().len() {
        for k in 0..probe.params()[pi].value.len() {
            let original = probe.params()[pi].value.data()[k];
            probe.params_mut()[pi].value.data_mut()[k] = original + eps;
            let plus = loss_at(&probe, &x)?;
            probe.params_mut()[pi].value.data_mut()[k] = original - eps;
            let minus = loss_at(&probe, &x)?;
            probe.params_mut()[pi].value.data_mut()[k] = original;
            let numeric = (plus - minus) / (2.0 * eps);
            let analytic = analytic_model.params()[pi].grad.data()[k].as_f64();
            worst = worst.max(relative_error(analytic, numeric));
        }
    }

    let tokens_in = matches!(model.layers().first(), Some(LayerSpec::Embedding { .. }));
    if !tokens_in {
        let mut xp = x.clone();
        for k in 0..xp.len() {
            let original = xp.data()[k];
            xp.data_mut()[k] = original + eps;
            let plus = loss_at(&probe, &xp)?;
            xp.data_mut()[k] = original - eps;
            let minus = loss_at(&probe, &xp)?;
            xp.data_mut()[k] = original;
            let numeric = (plus - minus) / (2.0 * eps);
            worst = worst.max(relative_error(input_grad.data()[k].as_f64(), numeric));
        }
    }
    Ok(worst)
}

/// A named model and input for [`grad_check`].
#[derive(Debug, Clone)]
pub struct GradCase {
    pub name: &'static str,
    pub model: Model<f32>,
    pub input: Tensor<f32>,
}

fn conv(i: usize, o: usize, k: usize, s: usize, p: usize) -> LayerSpec {
    LayerSpec::Conv2d {
        in_channels: i,
        out_channels: o,
        kernel: k,
        stride: s,
        padding: p,
    }
}

fn dense(inputs: usize, outputs: usize) -> LayerSpec {
    LayerSpec::Dense { inputs, outputs }
}

/// One small model per layer kind, then a conv → relu → pool → conv →
/// relu → pool → dense classifier on 8×8 inputs. Inputs are `U(−1, 1)`
/// except the embedding case, which takes token indices.
pub fn standard_cases(seed: u64) -> Result<Vec<GradCase>> {
    let specs: Vec<(&'static str, Vec<usize>, Vec<LayerSpec>)> = vec![
        ("dense", vec![4], vec![dense(4, 3)]),
        ("conv2d", vec![1, 4, 4], vec![conv(1, 2, 3, 1, 1)]),
        ("conv2d-strided", vec![2, 5, 5], vec![conv(2, 1, 3, 2, 0)]),
        ("relu", vec![5], vec![dense(5, 4), LayerSpec::Relu]),
        ("maxpool2", vec![1, 5, 4], vec![conv(1, 2, 3, 1, 1), LayerSpec::MaxPool2]),
        ("softmax", vec![3], vec![dense(3, 4), LayerSpec::Softmax]),
        ("lstm", vec![4, 3], vec![LayerSpec::Lstm { inputs: 3, hidden: 2 }]),
        ("embedding", vec![4], vec![LayerSpec::Embedding { vocab: 5, dim: 3 }, dense(3, 2)]),
        (
            "conv-classifier",
            vec![1, 8, 8],
            vec![
                conv(1, 2, 3, 1, 1),
                LayerSpec::Relu,
                LayerSpec::MaxPool2,
                conv(2, 3, 3, 1, 1),
                LayerSpec::Relu,
                LayerSpec::MaxPool2,
                dense(3 * 2 * 2, 3),
            ],
        ),
    ];
    let mut rng = SplitMix64::new(seed);
    specs
        .into_iter()
        .map(|(name, dims, layers)| {
            let model = Model::new(&dims, layers, rng.next_u64())?;
            let input = if name == "embedding" {
                Tensor::vector(vec![0.0, 4.0, 2.0, 4.0])
            } else {
                let n = dims.iter().product();
                Tensor::new(dims, (0..n).map(|_| rng.uniform(-1.0, 1.0) as f32).collect())?
            };
            Ok(GradCase { name, model, input })
        })
        .collect()
}
