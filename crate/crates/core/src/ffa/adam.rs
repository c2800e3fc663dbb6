use ndarray::{Array1, Array2, Zip};

use crate::snn::LayerGrads;

/// Adam moments for one dense layer.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m_weights: Array2<f64>,
    v_weights: Array2<f64>,
    m_bias: Array1<f64>,
    v_bias: Array1<f64>,
    step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(outputs: usize, inputs: usize) -> Self {
        AdamState {
            m_weights: Array2::zeros((outputs, inputs)),
            v_weights: Array2::zeros((outputs, inputs)),
            m_bias: Array1::zeros(outputs),
            v_bias: Array1::zeros(outputs),
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One bias-corrected Adam update of `weights`/`bias` against `grads`.
    pub fn update(&mut self, weights: &mut Array2<f64>, bias: &mut Array1<f64>, grads: &LayerGrads, learning_rate: f64) {
        self.step += 1;
        let (b1, b2, eps) = (self.beta1, self.beta2, self.epsilon);
        let c1 = 1.0 - b1.powi(self.step as i32);
        let c2 = 1.0 - b2.powi(self.step as i32);
        let apply = |p: &mut f64, m: &mut f64, v: &mut f64, g: &f64| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            *p -= learning_rate * (*m / c1) / ((*v / c2).sqrt() + eps);
        };
        Zip::from(weights)
            .and(&mut self.m_weights)
            .and(&mut self.v_weights)
            .and(&grads.weights)
            .for_each(apply);
        Zip::from(bias)
            .and(&mut self.m_bias)
            .and(&mut self.v_bias)
            .and(&grads.bias)
            .for_each(apply);
    }
}
