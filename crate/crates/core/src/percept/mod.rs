//! Perception engine: a drawing constrained to curved strokes and discs is
//! evolved to raise a target class score across one or more classifiers,
//! then checked against the real class and across classifiers.

mod genome;

pub use genome::{DrawingGenome, BLOB_PARAMS, DEFAULT_BLOBS, DEFAULT_STROKES, STROKE_PARAMS};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::nn::{argmax, log_sum_exp, Model, Tensor};
use crate::rng::SplitMix64;
use crate::synthdata::LabeledImageSet;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvolutionConfig {
    pub iterations: usize,
    /// Children per generation.
    pub lambda: usize,
    /// Mutation noise as a fraction of each parameter's box width.
    pub sigma: f64,
    /// Per-parameter mutation probability.
    pub rate: f64,
    pub seed: u64,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        Self { iterations: 1000, lambda: 16, sigma: 0.03, rate: 0.25, seed: 0 }
    }
}

/// Side length of the square single-channel images `model` consumes.
fn image_size(model: &Model) -> Result<usize> {
    match model.input_dims() {
        [1, h, w] if h == w => Ok(*h),
        dims => Err(Error::Shape(format!("classifier input {dims:?} is not [1, S, S]"))),
    }
}

fn class_count(model: &Model) -> Result<usize> {
    match model.output_dims()[..] {
        [k] if k >= 1 => Ok(k),
        ref dims => Err(Error::Shape(format!("classifier output {dims:?} is not a logit vector"))),
    }
}

/// Common image size and class count of a classifier ensemble.
fn check_ensemble(classifiers: &[&Model], target: Option<usize>) -> Result<(usize, usize)> {
    let first = classifiers.first().ok_or_else(|| Error::invalid("need at least one classifier"))?;
    let (size, k) = (image_size(first)?, class_count(first)?);
    for m in &classifiers[1..] {
        if image_size(m)? != size || class_count(m)? != k {
            return Err(Error::invalid("classifiers disagree on image size or class count"));
        }
    }
    if let Some(t) = target {
        if t >= k {
            return Err(Error::OutOfRange { index: t, size: k });
        }
    }
    Ok((size, k))
}

/// `ln softmax(logits)[target]`.
fn log_prob(model: &Model, image: &Tensor<f32>, target: usize) -> Result<f64> {
    let out = model.forward(image, false)?;
    let logits = out.output().data();
    Ok(f64::from(logits[target] - log_sum_exp(logits)))
}

/// Softmax probability of `target` on the rasterized genome.
pub fn score(genome: &DrawingGenome, classifier: &Model, target: usize) -> Result<f64> {
    let (size, _) = check_ensemble(&[classifier], Some(target))?;
    Ok(log_prob(classifier, &genome.rasterize(size), target)?.exp())
}

/// Mean target log-probability across the ensemble.
pub fn fitness(genome: &DrawingGenome, classifiers: &[&Model], target: usize) -> Result<f64> {
    let (size, _) = check_ensemble(classifiers, Some(target))?;
    let img = genome.rasterize(size);
    let mut sum = 0.0;
    for m in classifiers {
        sum += log_prob(m, &img, target)?;
    }
    Ok(sum / classifiers.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvolutionResult {
    pub genome: DrawingGenome,
    /// Incumbent fitness before the first generation and after each one.
    pub trace: Vec<f64>,
    /// Generations in which a child replaced the incumbent.
    pub improvements: usize,
}

/// (1+λ) elitist evolution strategy. Child `j` of generation `g` draws its
/// mutation from a stream fixed by `(seed, g, j)`, so evaluating children in
/// parallel selects the same child as a sequential run. The best child
/// (lowest index on ties) replaces the incumbent only if strictly fitter.
pub fn evolve(
    genome0: &DrawingGenome,
    classifiers: &[&Model],
    target: usize,
    cfg: &EvolutionConfig,
) -> Result<EvolutionResult> {
    if cfg.lambda == 0 || !(cfg.sigma > 0.0 && cfg.sigma.is_finite()) || !(0.0..=1.0).contains(&cfg.rate) {
        return Err(Error::invalid("need lambda ≥ 1, sigma > 0 and rate in [0, 1]"));
    }
    check_ensemble(classifiers, Some(target))?;
    let streams = SplitMix64::new(cfg.seed).split("evolve");
    let mut best = genome0.clone();
    let mut best_fit = fitness(&best, classifiers, target)?;
    let mut trace = Vec::with_capacity(cfg.iterations + 1);
    trace.push(best_fit);
    let mut improvements = 0;
    for g in 0..cfg.iterations {
        let generation = streams.split_index(g as u64);
        let children = (0..cfg.lambda)
            .into_par_iter()
            .map(|j| {
                let child = best.mutate(cfg.sigma, cfg.rate, &mut generation.split_index(j as u64));
                let f = fitness(&child, classifiers, target)?;
                Ok((child, f))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut winner: Option<(DrawingGenome, f64)> = None;
        for (child, f) in children {
            if winner.as_ref().is_none_or(|w| f > w.1) {
                winner = Some((child, f));
            }
        }
        if let Some((child, f)) = winner {
            if f > best_fit {
                best = child;
                best_fit = f;
                improvements += 1;
            }
        }
        trace.push(best_fit);
    }
    Ok(EvolutionResult { genome: best, trace, improvements })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgreementReport {
    /// Argmax class per classifier, ties to the lowest index.
    pub top1: Vec<usize>,
    /// Fraction of classifier pairs with the same top-1 class.
    pub agreement: f64,
}

pub fn transfer_report(genome: &DrawingGenome, classifiers: &[&Model]) -> Result<AgreementReport> {
    if classifiers.len() < 2 {
        return Err(Error::invalid("agreement needs at least two classifiers"));
    }
    let (size, _) = check_ensemble(classifiers, None)?;
    let img = genome.rasterize(size);
    let top1 = classifiers
        .iter()
        .map(|m| Ok(argmax(m.forward(&img, false)?.output().data())))
        .collect::<Result<Vec<_>>>()?;
    let (mut agree, mut pairs) = (0usize, 0usize);
    for i in 0..top1.len() {
        for j in i + 1..top1.len() {
            pairs += 1;
            agree += usize::from(top1[i] == top1[j]);
        }
    }
    Ok(AgreementReport { top1, agreement: agree as f64 / pairs as f64 })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DominanceReport {
    pub genome_score: f64,
    pub mean_real_score: f64,
    /// Genome scores strictly above the real-class mean.
    pub dominates: bool,
    pub real_count: usize,
}

/// Compare the genome's target probability against the mean over the real
/// images labelled `target`.
pub fn dominance_check(
    genome: &DrawingGenome,
    classifier: &Model,
    target: usize,
    real: &LabeledImageSet,
) -> Result<DominanceReport> {
    let (size, _) = check_ensemble(&[classifier], Some(target))?;
    let members: Vec<&Tensor<f32>> = real
        .images
        .iter()
        .zip(&real.labels)
        .filter(|(_, &l)| l == target)
        .map(|(img, _)| img)
        .collect();
    if members.is_empty() {
        return Err(Error::invalid(format!("no real examples of class {target}")));
    }
    let scores = members
        .par_iter()
        .map(|img| Ok(log_prob(classifier, img, target)?.exp()))
        .collect::<Result<Vec<f64>>>()?;
    let mean_real_score = scores.iter().sum::<f64>() / scores.len() as f64;
    let genome_score = log_prob(classifier, &genome.rasterize(size), target)?.exp();
    Ok(DominanceReport {
        genome_score,
        mean_real_score,
        dominates: genome_score > mean_real_score,
        real_count: scores.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::LayerSpec;

    /// Two logits on `[1, S, S]`: the mean pixel intensity and zero.
    pub(crate) fn mean_intensity_model(size: usize) -> Model {
        let mut m = Model::new(&[1, size, size], vec![LayerSpec::Dense { inputs: size * size, outputs: 2 }], 0).unwrap();
        let n = (size * size) as f32;
        let p = &mut m.params_mut();
        p[0].value.data_mut().iter_mut().enumerate().for_each(|(i, w)| *w = if i < size * size { 1.0 / n } else { 0.0 });
        p[1].value.data_mut().iter_mut().for_each(|b| *b = 0.0);
        m
    }

    fn mean(img: &Tensor<f32>) -> f64 {
        img.data().iter().map(|&v| f64::from(v)).sum::<f64>() / img.data().len() as f64
    }

    #[test]
    fn single_class_scores_one() {
        let m = Model::new(&[1, 8, 8], vec![LayerSpec::Dense { inputs: 64, outputs: 1 }], 3).unwrap();
        let g = DrawingGenome::random(2, 1, 1);
        assert_eq!(score(&g, &m, 0).unwrap(), 1.0);
        assert!(score(&g, &m, 1).is_err());
    }

    #[test]
    fn scores_form_a_distribution() {
        let m = Model::new(&[1, 8, 8], vec![LayerSpec::Dense { inputs: 64, outputs: 4 }], 3).unwrap();
        let g = DrawingGenome::random(2, 1, 1);
        let s: Vec<f64> = (0..4).map(|k| score(&g, &m, k).unwrap()).collect();
        assert!(s.iter().all(|&p| p > 0.0 && p < 1.0));
        assert!((s.iter().sum::<f64>() - 1.0).abs() < 1e-5);
    }

    #[test]
    fn brighter_genome_scores_higher_on_mean_intensity() {
        let m = mean_intensity_model(16);
        let g = DrawingGenome::random(6, 3, 2);
        let (dim, bright) = (g.with_intensity(0.2), g.with_intensity(1.0));
        assert!(mean(&bright.rasterize(16)) > mean(&dim.rasterize(16)));
        assert!(score(&bright, &m, 0).unwrap() > score(&dim, &m, 0).unwrap());
    }

    #[test]
    fn zero_iterations_return_the_start() {
        let m = mean_intensity_model(16);
        let g = DrawingGenome::random(6, 3, 2);
        let r = evolve(&g, &[&m], 0, &EvolutionConfig { iterations: 0, ..EvolutionConfig::default() }).unwrap();
        assert_eq!(r.genome, g);
        assert_eq!(r.trace.len(), 1);
    }

    #[test]
    fn ensemble_mismatches_are_rejected() {
        let a = Model::new(&[1, 8, 8], vec![LayerSpec::Dense { inputs: 64, outputs: 3 }], 1).unwrap();
        let b = Model::new(&[1, 8, 8], vec![LayerSpec::Dense { inputs: 64, outputs: 4 }], 1).unwrap();
        let g = DrawingGenome::random(1, 1, 0);
        let cfg = EvolutionConfig { iterations: 1, ..EvolutionConfig::default() };
        assert!(evolve(&g, &[&a, &b], 0, &cfg).is_err());
        assert!(evolve(&g, &[], 0, &cfg).is_err());
        assert!(transfer_report(&g, &[&a]).is_err());
        assert!(evolve(&g, &[&a], 0, &EvolutionConfig { lambda: 0, ..cfg }).is_err());
    }

    #[test]
    fn identical_classifiers_agree() {
        let a = Model::new(&[1, 8, 8], vec![LayerSpec::Dense { inputs: 64, outputs: 3 }], 1).unwrap();
        let g = DrawingGenome::random(2, 1, 0);
        assert_eq!(transfer_report(&g, &[&a, &a]).unwrap().agreement, 1.0);
        let r = transfer_report(&g, &[&a, &a, &a, &a]).unwrap();
        assert_eq!(r.agreement, 1.0);
        assert_eq!(r.top1.len(), 4);
    }
}
