mod common;

use mechlab::classifier::{DEEP_LAYER, LOGIT_LAYER};
use mechlab::dream::*;
use mechlab::nn::Tensor;

#[test]
fn cross_logit_dream_from_grey_multiplies_probability() {
    let clf = common::reference_classifier();
    let cross = clf.class_index("cross").unwrap();
    let start = Tensor::filled(&[1, 32, 32], 0.5f32);
    let target = DreamTarget { layer: LOGIT_LAYER, selector: Selector::Unit(cross) };
    let r = maximize_activation(&clf.model, &start, &target, &DreamConfig::default()).unwrap();
    assert_eq!(r.trace.len(), 201);
    assert!(r.trace.windows(2).all(|p| p[1] >= p[0]));
    assert!(r.trace[200] > r.trace[0]);
    let p0 = f64::from(clf.probabilities(&start).unwrap()[cross]);
    let p1 = f64::from(clf.probabilities(&r.image).unwrap()[cross]);
    assert!(p1 >= 5.0 * p0, "{p0} -> {p1}");
}

#[test]
fn noise_start_reads_target_class_into_image() {
    let clf = common::reference_classifier();
    let start = common::noise_image(32, 77);
    let p_start = clf.probabilities(&start).unwrap();
    for name in ["cross", "ring", "chevron"] {
        let class = clf.class_index(name).unwrap();
        let target = DreamTarget { layer: LOGIT_LAYER, selector: Selector::Unit(class) };
        let cfg = DreamConfig { steps: 50, ..DreamConfig::default() };
        let r = maximize_activation(&clf.model, &start, &target, &cfg).unwrap();
        let p_end = clf.probabilities(&r.image).unwrap();
        assert!(p_end[class] > p_start[class], "{name}: {} -> {}", p_start[class], p_end[class]);
    }
}

#[test]
fn deep_whole_layer_trace_is_monotone_and_deterministic() {
    let clf = common::reference_classifier();
    let start = common::test_set().images[3].clone();
    let target = DreamTarget { layer: DEEP_LAYER, selector: Selector::WholeLayer };
    let cfg = DreamConfig { steps: 60, step_size: 0.5, ..DreamConfig::default() };
    let a = maximize_activation(&clf.model, &start, &target, &cfg).unwrap();
    let b = maximize_activation(&clf.model, &start, &target, &cfg).unwrap();
    assert_eq!(a, b);
    assert!(a.trace.windows(2).all(|p| p[1] >= p[0]));
    assert!(a.image.data().iter().all(|v| (0.0..=1.0).contains(v)));
}

#[test]
fn jittered_dream_is_deterministic_and_clamped() {
    let clf = common::reference_classifier();
    let start = Tensor::filled(&[1, 32, 32], 0.5f32);
    let target = DreamTarget { layer: 4, selector: Selector::Channel(2) };
    let cfg = DreamConfig { steps: 30, step_size: 0.2, jitter: 3, seed: 9, ..DreamConfig::default() };
    let a = maximize_activation(&clf.model, &start, &target, &cfg).unwrap();
    let b = maximize_activation(&clf.model, &start, &target, &cfg).unwrap();
    assert_eq!(a.trace, b.trace);
    assert_eq!(a.image, b.image);
    assert!(a.image.data().iter().all(|v| (0.0..=1.0).contains(v)));
}

#[test]
fn compare_trivial_cases() {
    let clf = common::reference_classifier();
    let start = common::test_set().images[0].clone();
    let cfg = DreamConfig { steps: 0, ..DreamConfig::default() };
    let c = dream_compare(&clf.model, &start, 0, DEEP_LAYER, &cfg).unwrap();
    assert_eq!(c.peripheral.image, start);
    assert_eq!(c.deep.image, start);
    assert_eq!(c.stats.peripheral_energy, 0.0);
    assert_eq!(c.stats.deep_energy, 0.0);

    let cfg = DreamConfig { steps: 10, ..DreamConfig::default() };
    let c = dream_compare(&clf.model, &start, 4, 4, &cfg).unwrap();
    assert_eq!(c.stats.peripheral_energy, c.stats.deep_energy);
    assert!(dream_compare(&clf.model, &start, 5, 4, &cfg).is_err());
}
