use serde::{Deserialize, Serialize};

use crate::error::{FfError, Result};

/// Parameters of a leaky integrate-and-fire population.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LifParams {
    /// Membrane decay per timestep, in `(0, 1]`.
    pub decay: f64,
    pub threshold: f64,
    /// Input resistance `R`.
    pub input_scale: f64,
    /// Per-spike damping of the synaptic drive; `1.0` disables downscaling.
    pub downscale_base: f64,
}

impl LifParams {
    /// First-layer defaults: threshold 0.4, decay 0.4.
    pub const FIRST_LAYER: LifParams = LifParams {
        decay: 0.4,
        threshold: 0.4,
        input_scale: 1.0,
        downscale_base: 0.85,
    };

    /// Defaults for every later layer: threshold 0.3, decay 0.2.
    pub const HIDDEN_LAYER: LifParams = LifParams {
        decay: 0.2,
        threshold: 0.3,
        input_scale: 1.0,
        downscale_base: 0.85,
    };

    pub fn for_layer(index: usize) -> LifParams {
        if index == 0 {
            Self::FIRST_LAYER
        } else {
            Self::HIDDEN_LAYER
        }
    }

    pub fn validate(&self) -> Result<()> {
        // Decay 0 is allowed for the memoryless limit used in tests.
        if !(0.0..=1.0).contains(&self.decay) {
            return Err(FfError::Domain(format!("decay {} outside (0, 1]", self.decay)));
        }
        if !(self.threshold > 0.0) {
            return Err(FfError::Domain(format!("threshold {} must be > 0", self.threshold)));
        }
        if !(self.input_scale > 0.0) {
            return Err(FfError::Domain(format!("input scale {} must be > 0", self.input_scale)));
        }
        if !(self.downscale_base > 0.0 && self.downscale_base <= 1.0) {
            return Err(FfError::Domain(format!(
                "downscale base {} outside (0, 1]",
                self.downscale_base
            )));
        }
        Ok(())
    }
}

/// One LIF update: integrate, fire on strictly exceeding threshold, reset to zero.
///
/// Returns the spike and the post-reset membrane potential.
#[inline]
pub fn lif_step(membrane: f64, input: f64, params: &LifParams) -> (bool, f64) {
    let u = params.decay * membrane + params.input_scale * input;
    let spike = u > params.threshold;
    (spike, if spike { 0.0 } else { u })
}
