use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::binio::{check_header, Reader, Writer};
use crate::data::ImageSet;
use crate::error::{FfError, Result};
use crate::ffa::{AdamState, FfNetwork};
use crate::rng::{self, purpose};
use crate::snn::LayerGrads;

pub const MAGIC: &[u8; 4] = b"FFDC";
pub const VERSION: u32 = 1;
const BCE_CLAMP: f64 = 1e-12;

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Single-layer sigmoid decoder from first-layer latents back to pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct Decoder {
    /// `image_dim x latent_dim`.
    weights: Array2<f64>,
    bias: Array1<f64>,
}

impl Decoder {
    pub fn new(weights: Array2<f64>, bias: Array1<f64>) -> Result<Self> {
        if weights.nrows() != bias.len() {
            return Err(FfError::Shape(format!(
                "{} decoder rows but {} biases",
                weights.nrows(),
                bias.len()
            )));
        }
        Ok(Decoder { weights, bias })
    }

    /// Zero weights with each bias at the logit of the pixel's mean target,
    /// the optimum of the latent-blind model.
    pub fn init(latent_dim: usize, targets: ArrayView2<'_, f64>) -> Self {
        let mean = targets
            .mean_axis(Axis(0))
            .unwrap_or_else(|| Array1::from_elem(targets.ncols(), 0.5));
        let bias = mean.mapv(|m| {
            let m = m.clamp(1e-3, 1.0 - 1e-3);
            (m / (1.0 - m)).ln()
        });
        Decoder {
            weights: Array2::zeros((targets.ncols(), latent_dim)),
            bias,
        }
    }

    pub fn latent_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn image_dim(&self) -> usize {
        self.weights.nrows()
    }

    pub fn weights(&self) -> &Array2<f64> {
        &self.weights
    }

    pub fn bias(&self) -> &Array1<f64> {
        &self.bias
    }

    pub fn logits(&self, latent: ArrayView1<'_, f64>) -> Array1<f64> {
        self.weights.dot(&latent) + &self.bias
    }

    pub fn decode(&self, latent: &[f64]) -> Result<Vec<f64>> {
        if latent.len() != self.latent_dim() {
            return Err(FfError::Shape(format!(
                "decoder takes {} latents, got {}",
                self.latent_dim(),
                latent.len()
            )));
        }
        Ok(self.logits(ArrayView1::from(latent)).iter().map(|&z| sigmoid(z)).collect())
    }

    /// Rows of `latents` decoded to rows of pixels.
    pub fn decode_batch(&self, latents: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut z = latents.dot(&self.weights.t());
        z += &self.bias;
        z.mapv_inplace(sigmoid);
        z
    }

    /// Mean per-pixel binary cross-entropy.
    pub fn bce(&self, latents: ArrayView2<'_, f64>, targets: ArrayView2<'_, f64>) -> f64 {
        let recon = self.decode_batch(latents);
        bce(recon.view(), targets)
    }

    pub fn write<W: Write>(&self, out: W) -> std::io::Result<W> {
        let mut w = Writer::new(out);
        w.bytes(MAGIC)?;
        w.u32(VERSION)?;
        w.u32(self.image_dim() as u32)?;
        w.u32(self.latent_dim() as u32)?;
        w.f64s(self.weights.iter())?;
        w.f64s(self.bias.iter())?;
        Ok(w.into_inner())
    }

    pub fn read<R: Read>(input: R) -> Result<Self> {
        let mut r = Reader::new(input);
        check_header(&mut r, MAGIC, VERSION)?;
        let rows = r.len("image dim", 1 << 24)?;
        let cols = r.len("latent dim", 1 << 24)?;
        let weights = Array2::from_shape_vec((rows, cols), r.f64s(rows * cols)?)
            .map_err(|e| FfError::Format(e.to_string()))?;
        let bias = Array1::from(r.f64s(rows)?);
        r.expect_end()?;
        Decoder::new(weights, bias)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| FfError::io(path, e))?;
        let mut w = self.write(BufWriter::new(file)).map_err(|e| FfError::io(path, e))?;
        w.flush().map_err(|e| FfError::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| FfError::io(path, e))?;
        Self::read(BufReader::new(file))
    }
}

pub fn bce(recon: ArrayView2<'_, f64>, targets: ArrayView2<'_, f64>) -> f64 {
    let total: f64 = recon
        .iter()
        .zip(targets.iter())
        .map(|(&p, &x)| -(x * p.max(BCE_CLAMP).ln() + (1.0 - x) * (1.0 - p).max(BCE_CLAMP).ln()))
        .sum();
    total / recon.len().max(1) as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecoderConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Multiplier applied to the learning rate every `decay_every` epochs.
    pub decay: f64,
    pub decay_every: usize,
    pub seed: u64,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        DecoderConfig {
            epochs: 50,
            batch_size: 512,
            learning_rate: 0.001,
            decay: 0.4,
            decay_every: 5,
            seed: 0,
        }
    }
}

/// Encoding seed for the decoder's latent pass over dataset sample `index`.
pub fn decoder_seed(root: u64, index: usize) -> u64 {
    rng::derive_seed(root, &[purpose::DECODER, u64::MAX, index as u64])
}

/// Positive first-layer latents (rows) and the matching images (rows).
pub fn positive_latents(network: &FfNetwork, data: &ImageSet, seed: u64) -> Result<(Array2<f64>, Array2<f64>)> {
    let rows = (0..data.len())
        .into_par_iter()
        .map(|i| network.first_layer_latent(&data.flat(i), data.label(i), decoder_seed(seed, i)))
        .collect::<Result<Vec<_>>>()?;
    let dim = network.latent_dim();
    let latents = Array2::from_shape_vec((rows.len(), dim), rows.concat()).map_err(|e| FfError::Shape(e.to_string()))?;
    let mut targets = Array2::zeros((data.len(), data.pixels()));
    for (i, mut row) in targets.rows_mut().into_iter().enumerate() {
        row.assign(&ArrayView1::from(&data.flat(i)));
    }
    Ok((latents, targets))
}

/// Fits a decoder on `(latent, image)` row pairs with Adam and a stepped
/// learning-rate decay. Returns the decoder and the mean training BCE of
/// each epoch.
pub fn fit_decoder(
    latents: ArrayView2<'_, f64>,
    targets: ArrayView2<'_, f64>,
    config: &DecoderConfig,
) -> Result<(Decoder, Vec<f64>)> {
    if latents.nrows() != targets.nrows() || latents.nrows() == 0 {
        return Err(FfError::Shape(format!(
            "{} latents for {} targets",
            latents.nrows(),
            targets.nrows()
        )));
    }
    if config.batch_size == 0 || config.decay_every == 0 || !(config.learning_rate > 0.0) {
        return Err(FfError::Config("decoder batch size, decay period and learning rate must be positive".into()));
    }
    let mut decoder = Decoder::init(latents.ncols(), targets);
    let mut adam = AdamState::new(decoder.image_dim(), decoder.latent_dim());
    let mut order: Vec<usize> = (0..latents.nrows()).collect();
    let mut log = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let lr = config.learning_rate * config.decay.powi((epoch / config.decay_every) as i32);
        order.shuffle(&mut rng::stream(config.seed, &[purpose::DECODER, epoch as u64]));
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            let l = latents.select(Axis(0), batch);
            let x = targets.select(Axis(0), batch);
            let recon = decoder.decode_batch(l.view());
            epoch_loss += bce(recon.view(), x.view()) * batch.len() as f64;
            // d(mean BCE)/dz = (p - x) / (batch * pixels)
            let mut dz = recon - &x;
            dz /= (batch.len() * x.ncols()) as f64;
            let grads = LayerGrads {
                weights: dz.t().dot(&l),
                bias: dz.sum_axis(Axis(0)),
            };
            adam.update(&mut decoder.weights, &mut decoder.bias, &grads, lr);
        }
        let mean = epoch_loss / latents.nrows() as f64;
        if !mean.is_finite() {
            return Err(FfError::Training {
                epoch,
                batch: 0,
                message: "decoder loss is not finite".into(),
            });
        }
        log.push(mean);
    }
    Ok((decoder, log))
}

/// Trains a decoder on the positive latents of `data`.
pub fn train_decoder(network: &FfNetwork, data: &ImageSet, config: &DecoderConfig) -> Result<(Decoder, Vec<f64>)> {
    let (latents, targets) = positive_latents(network, data, config.seed)?;
    fit_decoder(latents.view(), targets.view(), config)
}
