use ndarray::{Array1, ArrayView1};
use serde::{Deserialize, Serialize};

use super::decoder::{sigmoid, Decoder};
use crate::error::{FfError, Result};
use crate::ffa::FfNetwork;
use crate::latent::{nearest, DistanceKind, LatentStore};

/// Named alpha values for the obstruction families.
pub const ALPHA_PRESETS: [(&str, f64); 4] = [("square", 0.1), ("stripe-on", 0.5), ("gaussian", 0.7), ("stripe-off", 11.0)];

pub fn alpha_preset(name: &str) -> Option<f64> {
    ALPHA_PRESETS
        .iter()
        .find(|(n, _)| n.eq_ignore_ascii_case(name))
        .map(|&(_, a)| a)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AttributionConfig {
    pub alpha: f64,
    /// First trial step of every backtracking line search.
    pub initial_step: f64,
    /// Stop once the relative objective change over `window` steps is below this.
    pub tolerance: f64,
    pub window: usize,
    pub max_steps: usize,
    pub encode_seed: u64,
}

impl Default for AttributionConfig {
    fn default() -> Self {
        AttributionConfig {
            alpha: 0.1,
            initial_step: 0.05,
            tolerance: 1e-5,
            window: 10,
            max_steps: 2000,
            encode_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionResult {
    pub target_class: usize,
    pub alpha: f64,
    pub iterations: usize,
    pub converged: bool,
    /// `||Decode(l) - x||_2` at the start and end of the search.
    pub initial_decoder_distance: f64,
    pub decoder_distance: f64,
    /// Manhattan distance from the final latent to `L[c][c]`.
    pub latent_distance: f64,
    pub input: Vec<f64>,
    pub reconstruction: Vec<f64>,
    /// `input - reconstruction`.
    pub map: Vec<f64>,
    pub latent: Vec<f64>,
}

/// Smallest reconstruction value kept. Together with rounding to `f32`
/// this makes `x - r` exact in `f64` for `f32` inputs in `[0, 1]`, so
/// `map + reconstruction == input` holds bit for bit.
const RECON_FLOOR: f64 = 1.0 / (1u64 << 29) as f64;

fn representable(v: f64) -> f64 {
    f64::from(v as f32).max(RECON_FLOOR)
}

fn check_dims(latent: &[f64], image: &[f64], decoder: &Decoder) -> Result<()> {
    if latent.len() != decoder.latent_dim() || image.len() != decoder.image_dim() {
        return Err(FfError::Shape(format!(
            "decoder maps {} -> {}, got latent {} and image {}",
            decoder.latent_dim(),
            decoder.image_dim(),
            latent.len(),
            image.len()
        )));
    }
    Ok(())
}

/// `(decoder distance, latent distance)` of the attribution objective.
pub fn attribution_terms(latent: &[f64], image: &[f64], decoder: &Decoder, set: &[Vec<f64>]) -> Result<(f64, f64)> {
    check_dims(latent, image, decoder)?;
    let recon = decoder.decode(latent)?;
    let dec = recon.iter().zip(image).map(|(r, x)| (r - x) * (r - x)).sum::<f64>().sqrt();
    let (_, lat) = nearest(latent, set, DistanceKind::Manhattan)?;
    Ok((dec, lat))
}

/// `||Decode(l) - x||_2 + alpha * min_m ||l - m||_1`.
pub fn attribution_objective(latent: &[f64], image: &[f64], alpha: f64, decoder: &Decoder, set: &[Vec<f64>]) -> Result<f64> {
    let (dec, lat) = attribution_terms(latent, image, decoder, set)?;
    Ok(dec + alpha * lat)
}

/// Gradient of the attribution objective: the closed-form decoder term plus
/// `alpha * sign(l - m)` for the nearest member `m` (lowest index on ties).
pub fn latent_loss_gradient(latent: &[f64], image: &[f64], alpha: f64, decoder: &Decoder, set: &[Vec<f64>]) -> Result<Vec<f64>> {
    check_dims(latent, image, decoder)?;
    let z = decoder.logits(ArrayView1::from(latent));
    let recon: Array1<f64> = z.mapv(sigmoid);
    let residual: Array1<f64> = &recon - &ArrayView1::from(image);
    let norm = residual.dot(&residual).sqrt();
    let mut grad = if norm > 0.0 {
        let dz = (&residual / norm) * &recon.mapv(|p| p * (1.0 - p));
        decoder.weights().t().dot(&dz)
    } else {
        Array1::zeros(latent.len())
    };
    if alpha != 0.0 {
        let (m, _) = nearest(latent, set, DistanceKind::Manhattan)?;
        for (g, (l, t)) in grad.iter_mut().zip(latent.iter().zip(&set[m])) {
            let d = l - t;
            if d != 0.0 {
                *g += alpha * d.signum();
            }
        }
    }
    Ok(grad.to_vec())
}

/// Projected gradient descent with backtracking from `initial`, each
/// coordinate kept in `[0, upper]`.
pub fn search_latent(
    initial: Vec<f64>,
    image: &[f64],
    target_class: usize,
    decoder: &Decoder,
    set: &[Vec<f64>],
    upper: f64,
    config: &AttributionConfig,
) -> Result<AttributionResult> {
    if !(config.alpha >= 0.0) || !(config.initial_step > 0.0) {
        return Err(FfError::Config("alpha must be >= 0 and the step > 0".into()));
    }
    if set.is_empty() {
        return Err(FfError::State(format!("latent set of class {target_class} is empty")));
    }
    let image: Vec<f64> = image.iter().map(|&v| f64::from(v as f32)).collect();
    let alpha = config.alpha;
    let project = |v: f64| v.clamp(0.0, upper);
    let mut latent: Vec<f64> = initial.into_iter().map(project).collect();
    let mut value = attribution_objective(&latent, &image, alpha, decoder, set)?;
    let initial_decoder_distance = attribution_terms(&latent, &image, decoder, set)?.0;
    let mut history = vec![value];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < config.max_steps {
        let grad = latent_loss_gradient(&latent, &image, alpha, decoder, set)?;
        let mut step = config.initial_step;
        let mut accepted = None;
        while step > 1e-12 {
            let trial: Vec<f64> = latent.iter().zip(&grad).map(|(l, g)| project(l - step * g)).collect();
            let v = attribution_objective(&trial, &image, alpha, decoder, set)?;
            if v <= value {
                accepted = Some((trial, v));
                break;
            }
            step *= 0.5;
        }
        iterations += 1;
        let Some((trial, v)) = accepted else {
            converged = true;
            break;
        };
        latent = trial;
        value = v;
        history.push(value);
        if history.len() > config.window {
            let past = history[history.len() - 1 - config.window];
            if (past - value).abs() <= config.tolerance * past.abs() {
                converged = true;
                break;
            }
        }
    }

    let (decoder_distance, latent_distance) = attribution_terms(&latent, &image, decoder, set)?;
    let reconstruction: Vec<f64> = decoder.decode(&latent)?.into_iter().map(representable).collect();
    let map = image.iter().zip(&reconstruction).map(|(x, r)| x - r).collect();
    Ok(AttributionResult {
        target_class,
        alpha,
        iterations,
        converged,
        initial_decoder_distance,
        decoder_distance,
        latent_distance,
        input: image,
        reconstruction,
        map,
        latent,
    })
}

/// Searches from the first-layer latent of `image` embedded with `class`
/// towards `L[class][class]` and returns `x - Decode(l)`.
pub fn get_attribution(
    image: &[f64],
    class: usize,
    network: &FfNetwork,
    decoder: &Decoder,
    store: &LatentStore,
    config: &AttributionConfig,
) -> Result<AttributionResult> {
    if class >= store.class_count() {
        return Err(FfError::Domain(format!("class {class} outside 0..{}", store.class_count())));
    }
    let initial = network.first_layer_latent(image, class, config.encode_seed)?;
    let upper = if network.goodness_kind().is_spiking() {
        1.0
    } else {
        f64::INFINITY
    };
    search_latent(initial, image, class, decoder, store.set(class, class), upper, config)
}
