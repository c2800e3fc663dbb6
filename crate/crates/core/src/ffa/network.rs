use ndarray::ArrayView1;
use serde::{Deserialize, Serialize};

use super::layer::{DenseAnalogLayer, FfLayer, LayerOutput, LayerTrace};
use crate::data::{make_codebook, LabelCodebook, DEFAULT_CODE_DENSITY, DEFAULT_CODE_DIM};
use crate::error::{FfError, Result};
use crate::goodness::{g_analog, spiking_goodness, GoodnessKind, ProbParams};
use crate::rng::{self, purpose};
use crate::snn::{rate_encode, DenseSpikingLayer, LifParams, DEFAULT_TIMESTEPS};

/// Architecture and goodness settings for a new network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkConfig {
    pub goodness: GoodnessKind,
    /// Width of each hidden layer.
    pub layers: Vec<usize>,
    pub timesteps: usize,
    pub code_dim: usize,
    pub code_density: f64,
    /// Overrides the per-goodness probability defaults.
    pub prob: Option<ProbParams>,
    /// Overrides the per-layer LIF defaults (spiking only).
    pub lif: Option<Vec<LifParams>>,
    /// Whether inference sums the first layer's goodness too.
    pub include_first_layer: bool,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            goodness: GoodnessKind::UnboundedSpiking,
            layers: vec![1400, 1400],
            timesteps: DEFAULT_TIMESTEPS,
            code_dim: DEFAULT_CODE_DIM,
            code_density: DEFAULT_CODE_DENSITY,
            prob: None,
            lif: None,
            include_first_layer: true,
        }
    }
}

/// A stack of layers trained layer-locally with label-embedded inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct FfNetwork {
    pub(crate) layers: Vec<FfLayer>,
    pub(crate) goodness: GoodnessKind,
    pub(crate) prob: ProbParams,
    pub(crate) codebook: LabelCodebook,
    pub(crate) timesteps: usize,
    pub(crate) image_dim: usize,
    pub(crate) include_first_layer: bool,
}

impl FfNetwork {
    pub fn new(config: &NetworkConfig, image_dim: usize, class_count: usize, seed: u64) -> Result<Self> {
        if config.layers.is_empty() {
            return Err(FfError::Config("network needs at least one layer".into()));
        }
        if config.timesteps == 0 {
            return Err(FfError::Config("timesteps must be >= 1".into()));
        }
        let codebook = make_codebook(class_count, config.code_dim, config.code_density, seed)?;
        let mut init = rng::stream(seed, &[purpose::INIT]);
        let mut inputs = image_dim + config.code_dim;
        let mut layers = Vec::with_capacity(config.layers.len());
        for (i, &width) in config.layers.iter().enumerate() {
            let layer = if config.goodness.is_spiking() {
                let lif = match &config.lif {
                    Some(list) => *list.get(i).ok_or_else(|| {
                        FfError::Config(format!("no LIF parameters for layer {i}"))
                    })?,
                    None => LifParams::for_layer(i),
                };
                lif.validate()?;
                FfLayer::Spiking(DenseSpikingLayer::init(inputs, width, lif, &mut init))
            } else {
                FfLayer::Analog(DenseAnalogLayer::init(inputs, width, true, &mut init))
            };
            layers.push(layer);
            inputs = width;
        }
        Ok(FfNetwork {
            layers,
            goodness: config.goodness,
            prob: config.prob.unwrap_or_else(|| ProbParams::default_for(config.goodness)),
            codebook,
            timesteps: config.timesteps,
            image_dim,
            include_first_layer: config.include_first_layer,
        })
    }

    pub fn from_parts(
        layers: Vec<FfLayer>,
        goodness: GoodnessKind,
        prob: ProbParams,
        codebook: LabelCodebook,
        timesteps: usize,
        image_dim: usize,
        include_first_layer: bool,
    ) -> Result<Self> {
        let mut inputs = image_dim + codebook.dim();
        for (i, layer) in layers.iter().enumerate() {
            if layer.input_dim() != inputs {
                return Err(FfError::Shape(format!(
                    "layer {i} takes {} inputs, previous width is {inputs}",
                    layer.input_dim()
                )));
            }
            let spiking = matches!(layer, FfLayer::Spiking(_));
            if spiking != goodness.is_spiking() {
                return Err(FfError::Config(format!("layer {i} does not match goodness {goodness:?}")));
            }
            inputs = layer.output_dim();
        }
        if layers.is_empty() || timesteps == 0 {
            return Err(FfError::Config("empty network or zero timesteps".into()));
        }
        Ok(FfNetwork {
            layers,
            goodness,
            prob,
            codebook,
            timesteps,
            image_dim,
            include_first_layer,
        })
    }

    pub fn layers(&self) -> &[FfLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [FfLayer] {
        &mut self.layers
    }

    pub fn goodness_kind(&self) -> GoodnessKind {
        self.goodness
    }

    pub fn prob_params(&self) -> &ProbParams {
        &self.prob
    }

    pub fn codebook(&self) -> &LabelCodebook {
        &self.codebook
    }

    pub fn class_count(&self) -> usize {
        self.codebook.class_count()
    }

    pub fn timesteps(&self) -> usize {
        self.timesteps
    }

    pub fn image_dim(&self) -> usize {
        self.image_dim
    }

    pub fn include_first_layer(&self) -> bool {
        self.include_first_layer
    }

    pub fn set_include_first_layer(&mut self, include: bool) {
        self.include_first_layer = include;
    }

    /// Width of the first layer, i.e. the latent dimension used for OoD scoring.
    pub fn latent_dim(&self) -> usize {
        self.layers[0].output_dim()
    }

    /// Image followed by the class code.
    pub fn embed_label(&self, image: &[f64], class: usize) -> Result<Vec<f64>> {
        embed_label(image, class, &self.codebook)
    }

    /// Runs the first `depth` layers on a label-embedded input.
    ///
    /// Spiking networks rate-encode `extended` with `encode_seed`. Code bits
    /// are exactly 0 or 1 and draw no randomness, so one seed yields the same
    /// image spikes whatever label is embedded.
    pub fn forward(
        &self,
        extended: &[f64],
        encode_seed: u64,
        depth: usize,
        record: bool,
    ) -> Result<Vec<(LayerOutput, Option<LayerTrace>)>> {
        if extended.len() != self.image_dim + self.codebook.dim() {
            return Err(FfError::Shape(format!(
                "network input is {} values, got {}",
                self.image_dim + self.codebook.dim(),
                extended.len()
            )));
        }
        let depth = depth.min(self.layers.len());
        let mut results: Vec<(LayerOutput, Option<LayerTrace>)> = Vec::with_capacity(depth);
        for layer in &self.layers[..depth] {
            let produced = match layer {
                FfLayer::Spiking(l) => {
                    let encoded;
                    let input = match results.last() {
                        Some((LayerOutput::Spikes(s), _)) => s,
                        Some(_) => return Err(FfError::State("mixed layer families".into())),
                        None => {
                            encoded = rate_encode(extended, self.timesteps, encode_seed)?;
                            &encoded
                        }
                    };
                    let (out, trace) = l.forward(input, record)?;
                    (LayerOutput::Spikes(out), trace.map(LayerTrace::Spiking))
                }
                FfLayer::Analog(l) => {
                    let trace = match results.last() {
                        Some((LayerOutput::Activations(a), _)) => l.forward(a.view())?,
                        Some(_) => return Err(FfError::State("mixed layer families".into())),
                        None => l.forward(ArrayView1::from(extended))?,
                    };
                    let out = LayerOutput::Activations(trace.output.clone());
                    (out, record.then_some(LayerTrace::Analog(trace)))
                }
            };
            results.push(produced);
        }
        Ok(results)
    }

    pub fn goodness_of(&self, output: &LayerOutput) -> f64 {
        match output {
            LayerOutput::Spikes(s) => spiking_goodness(self.goodness, s),
            LayerOutput::Activations(a) => g_analog(a.as_slice().expect("contiguous activations")),
        }
    }

    /// Goodness of every layer for `image` embedded with `class`.
    pub fn layer_goodness(&self, image: &[f64], class: usize, encode_seed: u64) -> Result<Vec<f64>> {
        let extended = self.embed_label(image, class)?;
        Ok(self
            .forward(&extended, encode_seed, self.layers.len(), false)?
            .iter()
            .map(|(out, _)| self.goodness_of(out))
            .collect())
    }

    /// Goodness summed over the layers used for inference.
    pub fn summed_goodness(&self, image: &[f64], class: usize, encode_seed: u64) -> Result<f64> {
        let per_layer = self.layer_goodness(image, class, encode_seed)?;
        let skip = usize::from(!self.include_first_layer && per_layer.len() > 1);
        Ok(per_layer[skip..].iter().sum())
    }

    /// Summed goodness for every candidate label.
    pub fn class_goodness(&self, image: &[f64], encode_seed: u64) -> Result<Vec<f64>> {
        (0..self.class_count())
            .map(|c| self.summed_goodness(image, c, encode_seed))
            .collect()
    }

    /// Label with the highest summed goodness; ties go to the smallest id.
    pub fn predict(&self, image: &[f64], encode_seed: u64) -> Result<usize> {
        Ok(argmax_first(&self.class_goodness(image, encode_seed)?))
    }

    /// Time-averaged first-layer latent of `image` embedded with `class`.
    pub fn first_layer_latent(&self, image: &[f64], class: usize, encode_seed: u64) -> Result<Vec<f64>> {
        let extended = self.embed_label(image, class)?;
        let out = self.forward(&extended, encode_seed, 1, false)?;
        Ok(out[0].0.latent_vector())
    }

    /// First-layer latents for every embedded label, sharing one encoding seed.
    pub fn first_layer_latents(&self, image: &[f64], encode_seed: u64) -> Result<Vec<Vec<f64>>> {
        (0..self.class_count())
            .map(|c| self.first_layer_latent(image, c, encode_seed))
            .collect()
    }

    /// Encoding seed of sample `index` for evaluation passes.
    pub fn eval_seed(root: u64, index: usize) -> u64 {
        rng::derive_seed(root, &[purpose::ENCODE_EVAL, index as u64])
    }
}

/// Flattened image concatenated with the class code.
pub fn embed_label(image: &[f64], class: usize, codebook: &LabelCodebook) -> Result<Vec<f64>> {
    if class >= codebook.class_count() {
        return Err(FfError::Domain(format!(
            "class {class} outside 0..{}",
            codebook.class_count()
        )));
    }
    let mut v = Vec::with_capacity(image.len() + codebook.dim());
    v.extend_from_slice(image);
    v.extend(codebook.code(class).iter().map(|&b| f64::from(b)));
    Ok(v)
}

pub(crate) fn argmax_first(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}
