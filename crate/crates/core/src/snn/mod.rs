//! Leaky integrate-and-fire dynamics, rate encoding and dense spiking layers.

mod encode;
mod layer;
mod lif;

pub use encode::{rate_encode, rate_encode_with, SpikeTrain};
pub use layer::{fast_sigmoid_grad, DenseSpikingLayer, LayerGrads, SpikingTrace};
pub use lif::{lif_step, LifParams};

/// Timesteps per presentation.
pub const DEFAULT_TIMESTEPS: usize = 20;
