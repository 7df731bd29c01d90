#![allow(dead_code)]

use std::sync::OnceLock;

use mechlab::classifier::{train_classifier, Classifier, ClassifierArch, TrainConfig};
use mechlab::nn::Tensor;
use mechlab::rng::SplitMix64;
use mechlab::synthdata::{gen_glyphs, GlyphClass, LabeledImageSet};

pub const TRAIN_SEED: u64 = 1;
pub const TEST_SEED: u64 = 2;

pub fn train_set() -> &'static LabeledImageSet {
    static SET: OnceLock<LabeledImageSet> = OnceLock::new();
    SET.get_or_init(|| gen_glyphs(&GlyphClass::ALL, 200, 32, TRAIN_SEED).unwrap())
}

pub fn test_set() -> &'static LabeledImageSet {
    static SET: OnceLock<LabeledImageSet> = OnceLock::new();
    SET.get_or_init(|| gen_glyphs(&GlyphClass::ALL, 50, 32, TEST_SEED).unwrap())
}

/// The pinned reference classifier: default widths, seed 3, 10 epochs.
pub fn reference_classifier() -> &'static Classifier {
    static CLF: OnceLock<Classifier> = OnceLock::new();
    CLF.get_or_init(|| {
        let cfg = TrainConfig { seed: 3, ..TrainConfig::default() };
        train_classifier(train_set(), ClassifierArch::default(), &cfg).unwrap().0
    })
}

/// Independently trained second classifier: other seed, other widths.
pub fn second_classifier() -> &'static Classifier {
    static CLF: OnceLock<Classifier> = OnceLock::new();
    CLF.get_or_init(|| {
        let cfg = TrainConfig { seed: 11, ..TrainConfig::default() };
        let arch = ClassifierArch { conv1: 12, conv2: 12, hidden: 48 };
        train_classifier(train_set(), arch, &cfg).unwrap().0
    })
}

pub fn noise_image(size: usize, seed: u64) -> Tensor<f32> {
    let mut rng = SplitMix64::new(seed);
    Tensor::new(vec![1, size, size], (0..size * size).map(|_| rng.next_f64() as f32).collect()).unwrap()
}

pub struct SentimentSetup {
    pub corpus: mechlab::synthdata::ReviewCorpus,
    pub lm: mechlab::sentiment::CharLM,
    pub report: mechlab::sentiment::LmReport,
    pub states: Vec<Vec<f32>>,
    pub labels: Vec<bool>,
}

impl SentimentSetup {
    pub fn split(&self, idx: &[usize]) -> (Vec<Vec<f32>>, Vec<bool>) {
        (idx.iter().map(|&i| self.states[i].clone()).collect(), idx.iter().map(|&i| self.labels[i]).collect())
    }
}

/// The pinned sentiment run: 2000 reviews (seed 1), default LM with seed 2.
pub fn sentiment_setup() -> &'static SentimentSetup {
    use mechlab::sentiment::{train_char_lm, LmConfig};
    static SETUP: OnceLock<SentimentSetup> = OnceLock::new();
    SETUP.get_or_init(|| {
        let corpus = mechlab::synthdata::gen_reviews(2000, 1).unwrap();
        let cfg = LmConfig { seed: 2, ..LmConfig::default() };
        let (lm, report) = train_char_lm(&corpus, &cfg).unwrap();
        let texts: Vec<&str> = corpus.docs.iter().map(|d| d.text.as_str()).collect();
        let states = lm.encode_reviews(&texts).unwrap();
        let labels = corpus.docs.iter().map(|d| d.sentiment.is_positive()).collect();
        SentimentSetup { corpus, lm, report, states, labels }
    })
}
