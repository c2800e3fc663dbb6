//! Spiking Forward-Forward networks, latent-space out-of-distribution
//! scoring and latent-space attribution.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod attribution;
mod binio;
pub mod data;
pub mod error;
pub mod ffa;
pub mod ffscp;
pub mod goodness;
pub mod latent;
pub mod metrics;
pub mod rng;
pub mod snn;

pub use error::{FfError, Result};
pub use ffa::{FfNetwork, NetworkConfig, NegativeMode, TrainConfig};
pub use goodness::{GoodnessKind, ProbParams};
pub use ffscp::{BranchRule, FfScpParams, GridRow, GridSearch, OodScore};
pub use latent::{DistanceKind, LatentStore, StoreConfig};
pub use metrics::{MetricsRow, ScoreTable};
pub use attribution::{AttributionConfig, AttributionResult, Decoder, DecoderConfig};
