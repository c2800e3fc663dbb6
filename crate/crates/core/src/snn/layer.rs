use ndarray::{Array1, Array2};
use rand::Rng;

use super::{LifParams, SpikeTrain};
use crate::error::{FfError, Result};

/// Derivative used in place of the spike indicator's: `1 / (1 + k|x|)^2`.
#[inline]
pub fn fast_sigmoid_grad(x: f64, slope: f64) -> f64 {
    let d = 1.0 + slope * x.abs();
    1.0 / (d * d)
}

/// Weight and bias gradients of one dense layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl LayerGrads {
    pub fn zeros(outputs: usize, inputs: usize) -> Self {
        LayerGrads {
            weights: Array2::zeros((outputs, inputs)),
            bias: Array1::zeros(outputs),
        }
    }

    pub fn add_assign(&mut self, other: &LayerGrads) {
        self.weights += &other.weights;
        self.bias += &other.bias;
    }

    pub fn scale(&mut self, factor: f64) {
        self.weights *= factor;
        self.bias *= factor;
    }

    pub fn norm(&self) -> f64 {
        (self.weights.iter().chain(self.bias.iter()).map(|g| g * g).sum::<f64>()).sqrt()
    }
}

/// Forward-pass record needed for backpropagation through time.
#[derive(Debug, Clone)]
pub struct SpikingTrace {
    /// Pre-reset membrane potential, time-major `T x N_out`.
    pub membrane: Vec<f64>,
    /// Drive multiplier `base^(spikes so far)`, time-major `T x N_out`.
    pub multiplier: Vec<f64>,
    /// Raw synaptic drive `W x(t) + b` before downscaling, time-major.
    pub drive: Vec<f64>,
    /// Indices of active inputs per timestep.
    pub active_inputs: Vec<Vec<u32>>,
    pub output: SpikeTrain,
}

/// Fully connected layer of LIF neurons.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseSpikingLayer {
    weights: Array2<f64>,
    bias: Array1<f64>,
    lif: LifParams,
}

impl DenseSpikingLayer {
    pub fn new(weights: Array2<f64>, bias: Array1<f64>, lif: LifParams) -> Result<Self> {
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
        lif.validate()?;
        Ok(DenseSpikingLayer { weights, bias, lif })
    }

    /// Uniform `±sqrt(6 / (N_in + N_out))` weights, zero bias.
    pub fn init<R: Rng + ?Sized>(inputs: usize, outputs: usize, lif: LifParams, rng: &mut R) -> Self {
        let limit = (6.0 / (inputs + outputs) as f64).sqrt();
        let weights = Array2::from_shape_simple_fn((outputs, inputs), || rng.random_range(-limit..limit));
        DenseSpikingLayer {
            weights,
            bias: Array1::zeros(outputs),
            lif,
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

    pub fn lif(&self) -> &LifParams {
        &self.lif
    }

    pub fn params_mut(&mut self) -> (&mut Array2<f64>, &mut Array1<f64>) {
        (&mut self.weights, &mut self.bias)
    }

    /// Runs the layer over all timesteps of `input`.
    ///
    /// At each step the drive `W x(t) + b` of neuron `n` is multiplied by
    /// `downscale_base^k`, `k` being the number of spikes `n` has emitted so
    /// far in this presentation, before the LIF update.
    pub fn forward(&self, input: &SpikeTrain, record: bool) -> Result<(SpikeTrain, Option<SpikingTrace>)> {
        if input.neuron_count() != self.input_dim() {
            return Err(FfError::Shape(format!(
                "layer expects {} inputs, got {}",
                self.input_dim(),
                input.neuron_count()
            )));
        }
        let steps = input.timestep_count();
        let outputs = self.output_dim();
        let lif = &self.lif;
        let mut out = SpikeTrain::zeros(outputs, steps);
        let mut membrane = vec![0.0; outputs];
        let mut multiplier = vec![1.0; outputs];
        let mut trace = record.then(|| SpikingTrace {
            membrane: Vec::with_capacity(steps * outputs),
            multiplier: Vec::with_capacity(steps * outputs),
            drive: Vec::with_capacity(steps * outputs),
            active_inputs: Vec::with_capacity(steps),
            output: SpikeTrain::zeros(0, 0),
        });
        let mut active: Vec<u32> = Vec::with_capacity(input.neuron_count());
        let mut drive = vec![0.0; outputs];

        for t in 0..steps {
            active.clear();
            active.extend(input.active_at(t).map(|i| i as u32));
            for (n, d) in drive.iter_mut().enumerate() {
                let row = self.weights.row(n);
                let row = row.as_slice().expect("row-major weights");
                *d = self.bias[n] + active.iter().map(|&i| row[i as usize]).sum::<f64>();
            }
            if let Some(tr) = trace.as_mut() {
                tr.drive.extend_from_slice(&drive);
                tr.multiplier.extend_from_slice(&multiplier);
                tr.active_inputs.push(active.clone());
            }
            for n in 0..outputs {
                let u = lif.decay * membrane[n] + lif.input_scale * multiplier[n] * drive[n];
                let spike = u > lif.threshold;
                if let Some(tr) = trace.as_mut() {
                    tr.membrane.push(u);
                }
                if spike {
                    out.set(n, t, true);
                    membrane[n] = 0.0;
                    multiplier[n] *= lif.downscale_base;
                } else {
                    membrane[n] = u;
                }
            }
        }
        if let Some(tr) = trace.as_mut() {
            tr.output = out.clone();
        }
        Ok((out, trace))
    }

    /// Adds the gradient of a loss to `grads`, given `grad_spikes[t * N + n] = dL/dS_n(t)`.
    ///
    /// Backpropagates through the membrane recurrence with the fast-sigmoid
    /// surrogate for `dS/dU`. Reset gates and downscale multipliers are
    /// constants of the recorded forward pass.
    pub fn accumulate_gradient(
        &self,
        trace: &SpikingTrace,
        grad_spikes: &[f64],
        surrogate_slope: f64,
        grads: &mut LayerGrads,
    ) -> Result<()> {
        let outputs = self.output_dim();
        let steps = trace.active_inputs.len();
        if trace.membrane.len() != steps * outputs || grad_spikes.len() != steps * outputs {
            return Err(FfError::State("trace does not match this layer".into()));
        }
        let lif = &self.lif;
        let mut grad_next = vec![0.0; outputs];
        let mut pre = vec![0.0; outputs];
        #[allow(clippy::needless_range_loop)]
        for t in (0..steps).rev() {
            let base = t * outputs;
            let spikes = trace.output.frame(t);
            for n in 0..outputs {
                let u = trace.membrane[base + n];
                let g = grad_spikes[base + n] * fast_sigmoid_grad(u - lif.threshold, surrogate_slope)
                    + grad_next[n] * lif.decay * f64::from(1 - spikes[n]);
                grad_next[n] = g;
                pre[n] = g * lif.input_scale * trace.multiplier[base + n];
            }
            let active = &trace.active_inputs[t];
            for n in 0..outputs {
                let gp = pre[n];
                if gp == 0.0 {
                    continue;
                }
                grads.bias[n] += gp;
                let mut row = grads.weights.row_mut(n);
                let row = row.as_slice_mut().expect("row-major gradient");
                for &i in active {
                    row[i as usize] += gp;
                }
            }
        }
        Ok(())
    }
}
