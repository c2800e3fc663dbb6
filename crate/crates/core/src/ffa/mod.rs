//! Layer-local Forward-Forward training of spiking and analog networks.

mod adam;
pub mod checkpoint;
mod layer;
mod loss;
mod network;
mod train;

pub use adam::AdamState;
pub use layer::{AnalogTrace, DenseAnalogLayer, FfLayer, LayerOutput, LayerTrace};
pub use loss::{goodness_loss, layer_gradient, layer_loss, Pass, LOG_CLAMP};
pub use network::{embed_label, FfNetwork, NetworkConfig};
pub use train::{
    accuracy, batch_gradients, make_negative, train, train_with, EpochRecord, NegativeMode, TrainConfig, TrainLog,
};
