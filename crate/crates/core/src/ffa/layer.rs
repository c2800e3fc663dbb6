use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;

use crate::error::{FfError, Result};
use crate::snn::{DenseSpikingLayer, LayerGrads, SpikeTrain, SpikingTrace};

const NORM_EPS: f64 = 1e-8;

/// Fully connected ReLU layer.
///
/// With `normalize_input` the input is scaled to unit root-mean-square first, so a layer
/// cannot read the previous layer's goodness off its input magnitude.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseAnalogLayer {
    weights: Array2<f64>,
    bias: Array1<f64>,
    normalize_input: bool,
}

#[derive(Debug, Clone)]
pub struct AnalogTrace {
    pub input: Array1<f64>,
    pub pre_activation: Array1<f64>,
    pub output: Array1<f64>,
}

impl DenseAnalogLayer {
    pub fn new(weights: Array2<f64>, bias: Array1<f64>, normalize_input: bool) -> Result<Self> {
        if weights.nrows() != bias.len() {
            return Err(FfError::Shape(format!(
                "{} weight rows but {} biases",
                weights.nrows(),
                bias.len()
            )));
        }
        if weights.iter().chain(bias.iter()).any(|w| !w.is_finite()) {
            return Err(FfError::Domain("non-finite layer parameter".into()));
        }
        Ok(DenseAnalogLayer {
            weights,
            bias,
            normalize_input,
        })
    }

    pub fn init<R: Rng + ?Sized>(inputs: usize, outputs: usize, normalize_input: bool, rng: &mut R) -> Self {
        let limit = (6.0 / (inputs + outputs) as f64).sqrt();
        let weights = Array2::from_shape_simple_fn((outputs, inputs), || rng.random_range(-limit..limit));
        DenseAnalogLayer {
            weights,
            bias: Array1::zeros(outputs),
            normalize_input,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.nrows()
    }

    pub fn weights(&self) -> &Array2<f64> {
        &self.weights
    }

    pub fn bias(&self) -> &Array1<f64> {
        &self.bias
    }

    pub fn normalize_input(&self) -> bool {
        self.normalize_input
    }

    pub fn params_mut(&mut self) -> (&mut Array2<f64>, &mut Array1<f64>) {
        (&mut self.weights, &mut self.bias)
    }

    pub fn forward(&self, input: ArrayView1<'_, f64>) -> Result<AnalogTrace> {
        if input.len() != self.input_dim() {
            return Err(FfError::Shape(format!(
                "layer expects {} inputs, got {}",
                self.input_dim(),
                input.len()
            )));
        }
        let input = if self.normalize_input {
            let rms = (input.dot(&input) / input.len() as f64).sqrt();
            input.mapv(|v| v / (rms + NORM_EPS))
        } else {
            input.to_owned()
        };
        let pre_activation = self.weights.dot(&input) + &self.bias;
        let output = pre_activation.mapv(|z| z.max(0.0));
        Ok(AnalogTrace {
            input,
            pre_activation,
            output,
        })
    }

    /// Adds `dL/dW`, `dL/db` given `grad_output = dL/da`.
    pub fn accumulate_gradient(&self, trace: &AnalogTrace, grad_output: &[f64], grads: &mut LayerGrads) -> Result<()> {
        if grad_output.len() != self.output_dim() || trace.input.len() != self.input_dim() {
            return Err(FfError::State("trace does not match this layer".into()));
        }
        let input = trace.input.as_slice().expect("contiguous input");
        for (n, &g) in grad_output.iter().enumerate() {
            if trace.pre_activation[n] <= 0.0 || g == 0.0 {
                continue;
            }
            grads.bias[n] += g;
            let mut row = grads.weights.row_mut(n);
            for (w, &x) in row.iter_mut().zip(input) {
                *w += g * x;
            }
        }
        Ok(())
    }
}

/// A trainable layer of either family.
#[derive(Debug, Clone, PartialEq)]
pub enum FfLayer {
    Spiking(DenseSpikingLayer),
    Analog(DenseAnalogLayer),
}

impl FfLayer {
    pub fn input_dim(&self) -> usize {
        match self {
            FfLayer::Spiking(l) => l.input_dim(),
            FfLayer::Analog(l) => l.input_dim(),
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            FfLayer::Spiking(l) => l.output_dim(),
            FfLayer::Analog(l) => l.output_dim(),
        }
    }

    pub fn params_mut(&mut self) -> (&mut Array2<f64>, &mut Array1<f64>) {
        match self {
            FfLayer::Spiking(l) => l.params_mut(),
            FfLayer::Analog(l) => l.params_mut(),
        }
    }

    pub fn weights(&self) -> &Array2<f64> {
        match self {
            FfLayer::Spiking(l) => l.weights(),
            FfLayer::Analog(l) => l.weights(),
        }
    }

    pub fn bias(&self) -> &Array1<f64> {
        match self {
            FfLayer::Spiking(l) => l.bias(),
            FfLayer::Analog(l) => l.bias(),
        }
    }
}

/// What a layer hands to the next one (and to the goodness function).
#[derive(Debug, Clone, PartialEq)]
pub enum LayerOutput {
    Spikes(SpikeTrain),
    Activations(Array1<f64>),
}

impl LayerOutput {
    /// Time-averaged spike counts, or the raw activations.
    pub fn latent_vector(&self) -> Vec<f64> {
        match self {
            LayerOutput::Spikes(s) => s.rates(),
            LayerOutput::Activations(a) => a.to_vec(),
        }
    }
}

#[derive(Debug, Clone)]
pub enum LayerTrace {
    Spiking(SpikingTrace),
    Analog(AnalogTrace),
}
