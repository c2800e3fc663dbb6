//! Latent-space attribution: a decoder from first-layer latents to pixels
//! and a search for the nearest in-class reconstruction of an input.

mod decoder;
mod heatmap;
mod search;

pub use decoder::{bce, decoder_seed, fit_decoder, positive_latents, train_decoder, Decoder, DecoderConfig};
pub use heatmap::{diverging_rgb, grayscale_pgm, heatmap_ppm, map_csv, parse_map_csv, render_heatmap};
pub use search::{
    alpha_preset, attribution_objective, attribution_terms, get_attribution, latent_loss_gradient, search_latent,
    AttributionConfig, AttributionResult, ALPHA_PRESETS,
};
