use mechlab::nn::{grad_check, standard_cases, LayerSpec, Model, Tensor};
use mechlab::rng::SplitMix64;
use proptest::prelude::*;

fn random_tensor(dims: &[usize], seed: u64) -> Tensor<f32> {
    let mut rng = SplitMix64::new(seed);
    let n = dims.iter().product();
    Tensor::new(dims.to_vec(), (0..n).map(|_| rng.uniform(-1.0, 1.0) as f32).collect()).unwrap()
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

#[test]
fn every_layer_kind_matches_finite_differences() {
    for case in standard_cases(21).unwrap() {
        assert!(case.model.param_count() <= 200, "{}", case.name);
        let err32 = grad_check(&case.model, &case.input, 1e-3).unwrap();
        assert!(err32 < 1e-2, "{}: 32-bit error {err32}", case.name);
        let err64 = grad_check(&case.model.cast::<f64>(), &case.input.cast::<f64>(), 1e-5).unwrap();
        assert!(err64 < 1e-5, "{}: 64-bit error {err64}", case.name);
    }
}

#[test]
fn conv_dense_classifier_matches_finite_differences() {
    let layers = vec![
        conv(1, 4, 3, 1, 1),
        LayerSpec::Relu,
        LayerSpec::MaxPool2,
        dense(4 * 4 * 4, 8),
    ];
    let model = Model::<f32>::new(&[1, 8, 8], layers, 4).unwrap();
    for seed in 0..3 {
        let x = random_tensor(&[1, 8, 8], 100 + seed);
        let err = grad_check(&model, &x, 1e-3).unwrap();
        assert!(err < 1e-2, "seed {seed}: {err}");
    }
}

#[test]
fn two_layer_random_instances() {
    let layers = vec![dense(4, 5), LayerSpec::Relu, dense(5, 3)];
    for seed in 0..10 {
        let model = Model::<f32>::new(&[4], layers.clone(), seed).unwrap();
        let err = grad_check(&model, &random_tensor(&[4], seed + 50), 1e-3).unwrap();
        assert!(err < 1e-2, "seed {seed}: {err}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn lstm_and_softmax_stacks_check_out(seed in 0u64..10_000, steps in 1usize..5) {
        let layers = vec![
            LayerSpec::Lstm { inputs: 2, hidden: 3 },
            dense(3, 3),
            LayerSpec::Softmax,
        ];
        let model = Model::<f32>::new(&[steps, 2], layers, seed).unwrap();
        let x = random_tensor(&[steps, 2], seed ^ 0xABCD);
        let err = grad_check(&model.cast::<f64>(), &x.cast::<f64>(), 1e-5).unwrap();
        prop_assert!(err < 1e-5, "64-bit error {}", err);
    }

    #[test]
    fn softmax_gradient_rows_sum_to_zero(logits in proptest::collection::vec(-20.0f32..20.0, 2..12), label_seed in 0usize..100) {
        let label = label_seed % logits.len();
        let (_, grad) = mechlab::nn::softmax_xent(&Tensor::vector(logits), label).unwrap();
        prop_assert!(grad.data().iter().map(|&g| f64::from(g)).sum::<f64>().abs() < 1e-6);
    }
}

#[test]
fn training_is_deterministic() {
    use mechlab::nn::{softmax_xent, Adam};
    let run = || {
        let mut model = Model::<f32>::new(&[6], vec![dense(6, 8), LayerSpec::Relu, dense(8, 3)], 9).unwrap();
        let adam = Adam::new(0.01);
        for t in 1..=30u64 {
            model.zero_grad();
            let x = random_tensor(&[6], t);
            let trace = model.forward(&x, true).unwrap();
            let (_, g) = softmax_xent(trace.output(), (t % 3) as usize).unwrap();
            model.backward(&trace, &g).unwrap();
            adam.step(model.params_mut(), t);
        }
        model
    };
    assert_eq!(run(), run());
}
