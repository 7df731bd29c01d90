use super::model::Parameter;
use super::tensor::Real;

/// Adam with bias correction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    /// One update at step `t` (1-based) using the populated gradients.
    pub fn step<T: Real>(&self, params: &mut [Parameter<T>], t: u64) {
        assert!(t >= 1, "adam step index starts at 1");
        let (b1, b2) = (T::of(self.beta1), T::of(self.beta2));
        let one = T::one();
        let bc1 = T::of(1.0 - self.beta1.powf(t as f64));
        let bc2 = T::of(1.0 - self.beta2.powf(t as f64));
        let (lr, eps) = (T::of(self.lr), T::of(self.eps));
        for p in params.iter_mut() {
            let Parameter {
                value, grad, m, v, ..
            } = p;
            for (((w, &g), m), v) in value
                .data_mut()
                .iter_mut()
                .zip(grad.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *m = b1 * *m + (one - b1) * g;
                *v = b2 * *v + (one - b2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *w -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Tensor;

    fn param(values: Vec<f32>, grads: Vec<f32>) -> Parameter<f32> {
        let mut p = Parameter::new("w", Tensor::vector(values));
        p.grad = Tensor::vector(grads);
        p
    }

    #[test]
    fn zero_gradient_leaves_values() {
        let mut ps = vec![param(vec![0.5, -1.0, 2.0], vec![0.0; 3])];
        let adam = Adam::new(0.1);
        for t in 1..=5 {
            adam.step(&mut ps, t);
        }
        assert_eq!(ps[0].value.data(), &[0.5, -1.0, 2.0]);
    }

    #[test]
    fn first_step_moves_by_lr() {
        // m = 0.1, v = 0.001; bias-corrected both equal 1 → Δw = -lr / (1 + eps).
        let mut ps = vec![param(vec![0.0], vec![1.0])];
        Adam::new(0.1).step(&mut ps, 1);
        let expect = -0.1 / (1.0 + 1e-8);
        assert!((f64::from(ps[0].value.data()[0]) - expect).abs() < 1e-5);
    }

    #[test]
    fn identical_params_stay_identical() {
        let mut ps = vec![
            param(vec![0.3, -0.2], vec![0.7, -1.1]),
            param(vec![0.3, -0.2], vec![0.7, -1.1]),
        ];
        let adam = Adam::new(0.01);
        for t in 1..=20 {
            adam.step(&mut ps, t);
            assert_eq!(ps[0].value, ps[1].value);
            assert_eq!(ps[0].m, ps[1].m);
        }
    }
}
