use crate::error::{Error, Result};

/// Logistic-regression probe on hidden states.
#[derive(Debug, Clone, PartialEq)]
pub struct Probe {
    pub weights: Vec<f64>,
    pub bias: f64,
    /// Training accuracy.
    pub accuracy: f64,
    pub iterations: usize,
}

pub const MAX_PROBE_ITERATIONS: usize = 10_000;
pub const PROBE_TOLERANCE: f64 = 1e-6;

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// `log(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

impl Probe {
    pub fn logit(&self, state: &[f32]) -> f64 {
        self.bias
            + self
                .weights
                .iter()
                .zip(state)
                .map(|(&w, &x)| w * f64::from(x))
                .sum::<f64>()
    }

    pub fn predict(&self, state: &[f32]) -> bool {
        self.logit(state) > 0.0
    }

    pub fn accuracy_on(&self, states: &[Vec<f32>], labels: &[bool]) -> f64 {
        let hits = states
            .iter()
            .zip(labels)
            .filter(|(s, &l)| self.predict(s) == l)
            .count();
        hits as f64 / states.len().max(1) as f64
    }
}

fn mean_log_loss(states: &[Vec<f32>], labels: &[bool], w: &[f64], b: f64) -> f64 {
    states
        .iter()
        .zip(labels)
        .map(|(s, &l)| {
            let z = b + w.iter().zip(s).map(|(&wi, &x)| wi * f64::from(x)).sum::<f64>();
            if l {
                softplus(-z)
            } else {
                softplus(z)
            }
        })
        .sum::<f64>()
        / states.len() as f64
}

/// Full-batch gradient descent on the mean logistic loss from zero weights,
/// stopping when the loss changes by less than 1e-6 or after 10⁴
/// iterations. The step is `4 / (1 + max‖x‖²)`, which bounds the loss
/// curvature so every step decreases the loss.
pub fn fit_probe(states: &[Vec<f32>], labels: &[bool]) -> Result<Probe> {
    if states.len() != labels.len() {
        return Err(Error::Shape(format!("{} states but {} labels", states.len(), labels.len())));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    if pos < 2 || labels.len() - pos < 2 {
        return Err(Error::invalid("probe needs at least two examples of each class"));
    }
    let dim = states[0].len();
    if states.iter().any(|s| s.len() != dim) {
        return Err(Error::Shape("states differ in length".into()));
    }
    let max_norm2 = states
        .iter()
        .map(|s| s.iter().map(|&x| f64::from(x).powi(2)).sum::<f64>())
        .fold(0.0, f64::max);
    let lr = 4.0 / (1.0 + max_norm2);
    let n = states.len() as f64;
    let mut w = vec![0.0; dim];
    let mut b = 0.0;
    let mut loss = mean_log_loss(states, labels, &w, b);
    let mut iterations = 0;
    while iterations < MAX_PROBE_ITERATIONS {
        let mut gw = vec![0.0; dim];
        let mut gb = 0.0;
        for (s, &l) in states.iter().zip(labels) {
            let z = b + w.iter().zip(s).map(|(&wi, &x)| wi * f64::from(x)).sum::<f64>();
            let r = sigmoid(z) - if l { 1.0 } else { 0.0 };
            gb += r;
            for (g, &x) in gw.iter_mut().zip(s) {
                *g += r * f64::from(x);
            }
        }
        for (wi, g) in w.iter_mut().zip(&gw) {
            *wi -= lr * g / n;
        }
        b -= lr * gb / n;
        iterations += 1;
        let next = mean_log_loss(states, labels, &w, b);
        let change = (loss - next).abs();
        loss = next;
        if change < PROBE_TOLERANCE {
            break;
        }
    }
    let mut probe = Probe {
        weights: w,
        bias: b,
        accuracy: 0.0,
        iterations,
    };
    probe.accuracy = probe.accuracy_on(states, labels);
    Ok(probe)
}

pub const HISTOGRAM_BINS: usize = 40;

/// Per-class counts over equal-width bins spanning the observed range.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub bin_low: Vec<f64>,
    pub count_pos: Vec<usize>,
    pub count_neg: Vec<usize>,
}

impl Histogram {
    pub fn new(values: &[f64], labels: &[bool], bins: usize) -> Self {
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
        let mut count_pos = vec![0; bins];
        let mut count_neg = vec![0; bins];
        for (&v, &l) in values.iter().zip(labels) {
            let bin = (((v - lo) / width) as usize).min(bins - 1);
            if l {
                count_pos[bin] += 1;
            } else {
                count_neg[bin] += 1;
            }
        }
        Self {
            bin_low: (0..bins).map(|i| lo + i as f64 * width).collect(),
            count_pos,
            count_neg,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SentimentUnit {
    pub index: usize,
    /// Mean of the unit over positive / negative documents.
    pub positive_mean: f64,
    pub negative_mean: f64,
    pub low_mode_mean: f64,
    pub high_mode_mean: f64,
    pub threshold: f64,
    /// True when values above the threshold are classified positive.
    pub positive_above: bool,
    pub single_unit_accuracy: f64,
    pub pooled_std: f64,
    /// `|positive_mean − negative_mean| / pooled_std`.
    pub separation: f64,
    pub histogram: Histogram,
}

impl SentimentUnit {
    pub fn classify(&self, value: f64) -> bool {
        (value > self.threshold) == self.positive_above
    }
}

/// The unit with the largest absolute probe weight (lowest index on ties),
/// with the threshold that best separates the classes on that unit alone
/// (lowest cut on ties). The threshold direction follows the sign of the
/// probe weight.
pub fn find_sentiment_unit(probe: &Probe, states: &[Vec<f32>], labels: &[bool]) -> Result<SentimentUnit> {
    if states.is_empty() || states.len() != labels.len() {
        return Err(Error::Shape("states and labels must be non-empty and equal in number".into()));
    }
    let mut index = 0;
    for (i, w) in probe.weights.iter().enumerate() {
        if w.abs() > probe.weights[index].abs() {
            index = i;
        }
    }
    if states.iter().any(|s| s.len() <= index) {
        return Err(Error::Shape("state shorter than probe".into()));
    }
    let values: Vec<f64> = states.iter().map(|s| f64::from(s[index])).collect();
    let positive_above = probe.weights[index] >= 0.0;

    let mut sorted = values.clone();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    let mut candidates = vec![sorted[0] - 1.0];
    candidates.extend(sorted.windows(2).map(|p| 0.5 * (p[0] + p[1])));
    let accuracy = |t: f64| {
        values
            .iter()
            .zip(labels)
            .filter(|(&v, &l)| ((v > t) == positive_above) == l)
            .count() as f64
            / values.len() as f64
    };
    let mut threshold = candidates[0];
    let mut best = accuracy(threshold);
    for &t in &candidates[1..] {
        let a = accuracy(t);
        if a > best {
            best = a;
            threshold = t;
        }
    }

    let class = |want: bool| -> (f64, f64, usize) {
        let xs: Vec<f64> = values.iter().zip(labels).filter(|(_, &l)| l == want).map(|(&v, _)| v).collect();
        let n = xs.len();
        let mean = xs.iter().sum::<f64>() / n.max(1) as f64;
        let ss = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>();
        (mean, ss, n)
    };
    let (positive_mean, ss_pos, n_pos) = class(true);
    let (negative_mean, ss_neg, n_neg) = class(false);
    let dof = (n_pos + n_neg).saturating_sub(2).max(1);
    let pooled_std = ((ss_pos + ss_neg) / dof as f64).sqrt();
    let gap = (positive_mean - negative_mean).abs();
    let separation = if pooled_std > 0.0 { gap / pooled_std } else { f64::INFINITY };

    Ok(SentimentUnit {
        index,
        positive_mean,
        negative_mean,
        low_mode_mean: positive_mean.min(negative_mean),
        high_mode_mean: positive_mean.max(negative_mean),
        threshold,
        positive_above,
        single_unit_accuracy: best,
        pooled_std,
        separation,
        histogram: Histogram::new(&values, labels, HISTOGRAM_BINS),
    })
}
