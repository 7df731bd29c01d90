//! Activation maximization: gradient ascent on an input image to amplify
//! chosen units of a fixed network.

use crate::error::{Error, Result};
use crate::nn::{Model, Real, Tensor};
use crate::rng::SplitMix64;

/// Which units of a layer to amplify.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Selector {
    /// One element of the layer output, by flat index.
    Unit(usize),
    /// Every position of one channel of a `[C, H, W]` output.
    Channel(usize),
    /// Unweighted mean over the whole layer.
    WholeLayer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DreamTarget {
    pub layer: usize,
    pub selector: Selector,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DreamConfig {
    pub steps: usize,
    pub step_size: f64,
    /// Weight λ of the `-λ‖x‖²` penalty.
    pub l2_decay: f64,
    /// Maximum circular shift in pixels; 0 disables jitter.
    pub jitter: usize,
    pub seed: u64,
}

impl Default for DreamConfig {
    fn default() -> Self {
        Self {
            steps: 200,
            step_size: 0.05,
            l2_decay: 1e-4,
            jitter: 0,
            seed: 0,
        }
    }
}

/// Line-search retries before the ascent gives up.
pub const MAX_HALVINGS: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct DreamResult {
    pub image: Tensor<f32>,
    /// Objective before the first step and after every step (`steps + 1`).
    pub trace: Vec<f64>,
    /// Step size in force at the end.
    pub final_step_size: f64,
    /// True when the line search ran out of halvings before `steps`.
    pub stalled: bool,
}

/// Flat indices and weight of the selected units for a layer output.
fn selection(dims: &[usize], selector: Selector) -> Result<Vec<usize>> {
    let total: usize = dims.iter().product();
    match selector {
        Selector::Unit(i) if i < total => Ok(vec![i]),
        Selector::Unit(i) => Err(Error::OutOfRange { index: i, size: total }),
        Selector::Channel(c) => {
            if dims.len() != 3 {
                return Err(Error::invalid(format!(
                    "channel selector needs a [C, H, W] layer, got {dims:?}"
                )));
            }
            if c >= dims[0] {
                return Err(Error::OutOfRange { index: c, size: dims[0] });
            }
            let plane = dims[1] * dims[2];
            Ok((c * plane..(c + 1) * plane).collect())
        }
        Selector::WholeLayer => Ok((0..total).collect()),
    }
}

/// Validate a target against a model and return the selected indices.
pub fn resolve_target(model: &Model, target: &DreamTarget) -> Result<Vec<usize>> {
    if target.layer >= model.depth() {
        return Err(Error::OutOfRange {
            index: target.layer,
            size: model.depth(),
        });
    }
    selection(&model.layer_dims()[target.layer], target.selector)
}

/// Mean activation of the selected units minus `l2·‖x‖²`.
pub fn objective(model: &Model, image: &Tensor<f32>, target: &DreamTarget, l2_decay: f64) -> Result<f64> {
    let units = resolve_target(model, target)?;
    objective_with(model, image, target.layer, &units, l2_decay)
}

fn objective_with(model: &Model, image: &Tensor<f32>, layer: usize, units: &[usize], l2: f64) -> Result<f64> {
    let trace = model.forward_until(image, layer + 1, false)?;
    let act = trace.output().data();
    let mean = units.iter().map(|&i| f64::from(act[i])).sum::<f64>() / units.len() as f64;
    let norm2 = image.data().iter().map(|&v| f64::from(v) * f64::from(v)).sum::<f64>();
    Ok(mean - l2 * norm2)
}

fn objective_gradient(
    model: &Model,
    image: &Tensor<f32>,
    layer: usize,
    units: &[usize],
    l2: f64,
) -> Result<Tensor<f32>> {
    let trace = model.forward_until(image, layer + 1, true)?;
    let mut g = Tensor::zeros(trace.output().dims());
    let w = 1.0 / units.len() as f32;
    for &i in units {
        g.data_mut()[i] += w;
    }
    let mut grad = model.input_gradient(&trace, &g)?;
    let l2 = l2 as f32;
    for (gv, &x) in grad.data_mut().iter_mut().zip(image.data()) {
        *gv -= 2.0 * l2 * x;
    }
    Ok(grad)
}

/// Circularly shift the last two axes by `(dy, dx)`.
pub fn roll(image: &Tensor<f32>, dy: isize, dx: isize) -> Tensor<f32> {
    let dims = image.dims();
    let (h, w) = (dims[dims.len() - 2], dims[dims.len() - 1]);
    let plane = h * w;
    let mut out = image.clone();
    for (src, dst) in image.data().chunks(plane).zip(out.data_mut().chunks_mut(plane)) {
        for y in 0..h {
            let ny = (y as isize + dy).rem_euclid(h as isize) as usize;
            for x in 0..w {
                let nx = (x as isize + dx).rem_euclid(w as isize) as usize;
                dst[ny * w + nx] = src[y * w + x];
            }
        }
    }
    out
}

fn check_config(cfg: &DreamConfig) -> Result<()> {
    if !(cfg.step_size > 0.0 && cfg.step_size.is_finite()) {
        return Err(Error::invalid("dream step size must be positive"));
    }
    if cfg.l2_decay < 0.0 {
        return Err(Error::invalid("l2 decay must be non-negative"));
    }
    Ok(())
}

/// Gradient ascent with pixel clamping to [0, 1]. Without jitter each step is
/// accepted only if the objective does not drop; otherwise the step size is
/// halved and the step retried, and after [`MAX_HALVINGS`] failures the run
/// stops and the trace is padded with the final value.
pub fn maximize_activation(
    model: &Model,
    start: &Tensor<f32>,
    target: &DreamTarget,
    cfg: &DreamConfig,
) -> Result<DreamResult> {
    check_config(cfg)?;
    if start.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::invalid("start image must lie in [0, 1]"));
    }
    let units = resolve_target(model, target)?;
    let layer = target.layer;
    let mut rng = SplitMix64::new(cfg.seed).split("dream-jitter");

    let mut image = start.clone();
    let mut value = objective_with(model, &image, layer, &units, cfg.l2_decay)?;
    let mut trace = Vec::with_capacity(cfg.steps + 1);
    trace.push(value);
    let mut step_size = cfg.step_size;
    let mut stalled = false;

    for _ in 0..cfg.steps {
        let grad = if cfg.jitter > 0 {
            let r = cfg.jitter as isize;
            let dy = rng.below(2 * cfg.jitter + 1) as isize - r;
            let dx = rng.below(2 * cfg.jitter + 1) as isize - r;
            let g = objective_gradient(model, &roll(&image, dy, dx), layer, &units, cfg.l2_decay)?;
            roll(&g, -dy, -dx)
        } else {
            objective_gradient(model, &image, layer, &units, cfg.l2_decay)?
        };

        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let lr = step_size as f32;
            let candidate = Tensor::new(
                image.dims().to_vec(),
                image
                    .data()
                    .iter()
                    .zip(grad.data())
                    .map(|(&x, &g)| (x + lr * g).clamp(0.0, 1.0))
                    .collect(),
            )?;
            let v = objective_with(model, &candidate, layer, &units, cfg.l2_decay)?;
            if cfg.jitter > 0 || v >= value {
                accepted = Some((candidate, v));
                break;
            }
            step_size *= 0.5;
        }
        match accepted {
            Some((candidate, v)) => {
                image = candidate;
                value = v;
                trace.push(value);
            }
            None => {
                stalled = true;
                break;
            }
        }
    }
    trace.resize(cfg.steps + 1, value);
    Ok(DreamResult {
        image,
        trace,
        final_step_size: step_size,
        stalled,
    })
}

/// Mean absolute 4-neighbour Laplacian over interior pixels of every plane.
pub fn high_frequency_energy<T: Real>(image: &Tensor<T>) -> f64 {
    let dims = image.dims();
    let (h, w) = (dims[dims.len() - 2], dims[dims.len() - 1]);
    if h < 3 || w < 3 {
        return 0.0;
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for plane in image.data().chunks(h * w) {
        let at = |y: usize, x: usize| plane[y * w + x].as_f64();
        for y in 1..h - 1 {
            for x in 1..w - 1 {
                let lap = at(y - 1, x) + at(y + 1, x) + at(y, x - 1) + at(y, x + 1) - 4.0 * at(y, x);
                total += lap.abs();
                count += 1;
            }
        }
    }
    total / count as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct DreamStats {
    pub peripheral_energy: f64,
    pub deep_energy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DreamComparison {
    pub peripheral: DreamResult,
    pub deep: DreamResult,
    pub stats: DreamStats,
}

fn delta(a: &Tensor<f32>, b: &Tensor<f32>) -> Tensor<f32> {
    Tensor::new(
        a.dims().to_vec(),
        a.data().iter().zip(b.data()).map(|(&x, &y)| x - y).collect(),
    )
    .expect("same dims")
}

/// Dream the whole of a peripheral layer and the whole of a deep layer from
/// the same start, and compare the high-frequency energy of the changes.
pub fn dream_compare(
    model: &Model,
    start: &Tensor<f32>,
    peripheral_layer: usize,
    deep_layer: usize,
    cfg: &DreamConfig,
) -> Result<DreamComparison> {
    if peripheral_layer > deep_layer {
        return Err(Error::invalid(format!(
            "peripheral layer {peripheral_layer} must not be deeper than {deep_layer}"
        )));
    }
    let run = |layer| {
        maximize_activation(
            model,
            start,
            &DreamTarget {
                layer,
                selector: Selector::WholeLayer,
            },
            cfg,
        )
    };
    let (peripheral, deep) = rayon::join(|| run(peripheral_layer), || run(deep_layer));
    let (peripheral, deep) = (peripheral?, deep?);
    let stats = DreamStats {
        peripheral_energy: high_frequency_energy(&delta(&peripheral.image, start)),
        deep_energy: high_frequency_energy(&delta(&deep.image, start)),
    };
    Ok(DreamComparison {
        peripheral,
        deep,
        stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::LayerSpec;

    fn linear_unit(weights: &[f32]) -> Model {
        let mut m = Model::new(
            &[1, 1, weights.len()],
            vec![LayerSpec::Dense {
                inputs: weights.len(),
                outputs: 1,
            }],
            0,
        )
        .unwrap();
        m.params_mut()[0].value.data_mut().copy_from_slice(weights);
        m.params_mut()[1].value.fill(0.0);
        m
    }

    #[test]
    fn zero_steps_returns_start() {
        let m = linear_unit(&[0.1, -0.2, 0.3]);
        let start = Tensor::filled(&[1, 1, 3], 0.5);
        let target = DreamTarget { layer: 0, selector: Selector::Unit(0) };
        let cfg = DreamConfig { steps: 0, ..DreamConfig::default() };
        let r = maximize_activation(&m, &start, &target, &cfg).unwrap();
        assert_eq!(r.image, start);
        assert_eq!(r.trace.len(), 1);
    }

    #[test]
    fn linear_unit_gains_step_times_norm_squared() {
        // Small step and mid-range start keep the clamp inactive.
        let w = [0.1f32, -0.2, 0.3, 0.05];
        let m = linear_unit(&w);
        let start = Tensor::new(vec![1, 1, 4], vec![0.5, 0.4, 0.45, 0.6]).unwrap();
        let target = DreamTarget { layer: 0, selector: Selector::Unit(0) };
        let cfg = DreamConfig { steps: 5, step_size: 0.1, l2_decay: 0.0, jitter: 0, seed: 1 };
        let r = maximize_activation(&m, &start, &target, &cfg).unwrap();
        let w0: f64 = w.iter().zip(start.data()).map(|(&a, &b)| f64::from(a) * f64::from(b)).sum();
        let norm2: f64 = w.iter().map(|&a| f64::from(a).powi(2)).sum();
        for (n, &v) in r.trace.iter().enumerate() {
            let expect = w0 + n as f64 * 0.1 * norm2;
            assert!((v - expect).abs() < 1e-6, "step {n}: {v} vs {expect}");
        }
    }

    #[test]
    fn trace_is_monotone_and_pixels_clamped() {
        let m = linear_unit(&[5.0, -3.0, 8.0, 1.0]);
        let start = Tensor::filled(&[1, 1, 4], 0.5);
        let target = DreamTarget { layer: 0, selector: Selector::WholeLayer };
        let cfg = DreamConfig { steps: 20, step_size: 1.0, l2_decay: 0.5, jitter: 0, seed: 0 };
        let r = maximize_activation(&m, &start, &target, &cfg).unwrap();
        assert_eq!(r.trace.len(), 21);
        assert!(r.trace.windows(2).all(|p| p[1] >= p[0]));
        assert!(r.image.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn invalid_targets_rejected() {
        let m = linear_unit(&[1.0, 1.0]);
        let start = Tensor::filled(&[1, 1, 2], 0.5);
        let cfg = DreamConfig::default();
        for target in [
            DreamTarget { layer: 1, selector: Selector::WholeLayer },
            DreamTarget { layer: 0, selector: Selector::Unit(1) },
            DreamTarget { layer: 0, selector: Selector::Channel(0) },
        ] {
            assert!(maximize_activation(&m, &start, &target, &cfg).is_err());
        }
    }

    #[test]
    fn roll_round_trips() {
        let img = Tensor::new(vec![1, 2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert_eq!(roll(&img, 0, 1).data(), &[3.0, 1.0, 2.0, 6.0, 4.0, 5.0]);
        assert_eq!(roll(&roll(&img, 1, -2), -1, 2), img);
    }

    #[test]
    fn laplacian_energy_of_constant_is_zero() {
        assert_eq!(high_frequency_energy(&Tensor::<f32>::filled(&[1, 5, 5], 0.7)), 0.0);
        let mut checker = Tensor::<f32>::zeros(&[1, 4, 4]);
        for (i, v) in checker.data_mut().iter_mut().enumerate() {
            *v = ((i / 4 + i % 4) % 2) as f32;
        }
        assert!(high_frequency_energy(&checker) > 3.0);
    }
}
