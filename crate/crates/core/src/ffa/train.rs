use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::adam::AdamState;
use super::loss::{layer_gradient, Pass};
use super::network::{argmax_first, FfNetwork};
use crate::data::ImageSet;
use crate::error::{FfError, Result};
use crate::goodness::GoodnessKind;
use crate::rng::{self, purpose};
use crate::snn::LayerGrads;

/// Samples per parallel work unit. Fixed so the reduction order, and hence
/// the result, does not depend on the thread count.
const CHUNK: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NegativeMode {
    /// Uniformly drawn wrong label.
    RandomWrong,
    /// Wrong label with the highest summed goodness under current weights.
    Greedy,
}

impl std::str::FromStr for NegativeMode {
    type Err = FfError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" | "random-wrong" => Ok(Self::RandomWrong),
            "greedy" => Ok(Self::Greedy),
            other => Err(FfError::Config(format!("unknown negative mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub negative_mode: NegativeMode,
    /// Slope `k` of the fast-sigmoid surrogate.
    pub surrogate_slope: f64,
    pub seed: u64,
    /// Training samples scored for the per-epoch accuracy log (0 disables).
    pub eval_samples: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            batch_size: 512,
            learning_rate: 0.002,
            negative_mode: NegativeMode::RandomWrong,
            surrogate_slope: 25.0,
            seed: 0,
            eval_samples: 1000,
        }
    }
}

impl TrainConfig {
    /// Defaults with the learning rate for the given network family.
    pub fn for_goodness(kind: GoodnessKind) -> Self {
        TrainConfig {
            learning_rate: if kind.is_spiking() { 0.002 } else { 0.001 },
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(FfError::Config("epochs and batch size must be >= 1".into()));
        }
        if !(self.surrogate_slope > 0.0) || !(self.learning_rate > 0.0) {
            return Err(FfError::Config("surrogate slope and learning rate must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean per-sample loss of each layer over the epoch.
    pub layer_losses: Vec<f64>,
    pub train_accuracy: Option<f64>,
    pub val_accuracy: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
}

impl TrainLog {
    /// `epoch,layer,loss,train_accuracy,val_accuracy`, one row per layer.
    pub fn to_csv(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or(String::new(), |a| format!("{a:.6}"));
        let mut out = String::from("epoch,layer,loss,train_accuracy,val_accuracy\n");
        for rec in &self.epochs {
            for (layer, loss) in rec.layer_losses.iter().enumerate() {
                out.push_str(&format!(
                    "{},{},{:.9},{},{}\n",
                    rec.epoch,
                    layer,
                    loss,
                    fmt(rec.train_accuracy),
                    fmt(rec.val_accuracy)
                ));
            }
        }
        out
    }
}

/// Picks the negative label for `(image, true_class)` and returns the embedded input.
pub fn make_negative<R: Rng + ?Sized>(
    image: &[f64],
    true_class: usize,
    network: &FfNetwork,
    mode: NegativeMode,
    rng: &mut R,
    encode_seed: u64,
) -> Result<(Vec<f64>, usize)> {
    let classes = network.class_count();
    if classes < 2 {
        return Err(FfError::Domain("negatives need at least two classes".into()));
    }
    let neg = match mode {
        NegativeMode::RandomWrong => {
            let k = rng.random_range(0..classes - 1);
            if k >= true_class {
                k + 1
            } else {
                k
            }
        }
        NegativeMode::Greedy => {
            let mut scores = Vec::with_capacity(classes);
            for c in 0..classes {
                scores.push(if c == true_class {
                    f64::NEG_INFINITY
                } else {
                    network.layer_goodness(image, c, encode_seed)?.iter().sum()
                });
            }
            argmax_first(&scores)
        }
    };
    Ok((network.embed_label(image, neg)?, neg))
}

fn negative_class(
    network: &FfNetwork,
    data: &ImageSet,
    index: usize,
    epoch: usize,
    config: &TrainConfig,
) -> Result<usize> {
    let tags = [purpose::NEG_LABEL, epoch as u64, index as u64];
    let mut rng = rng::stream(config.seed, &tags);
    let seed = rng::derive_seed(config.seed, &tags);
    let image = data.flat(index);
    Ok(make_negative(&image, data.label(index), network, config.negative_mode, &mut rng, seed)?.1)
}

/// Summed (not averaged) per-layer gradients and losses of a batch, each
/// gradient term scaled by `scale`.
pub fn batch_gradients(
    network: &FfNetwork,
    data: &ImageSet,
    batch: &[usize],
    negatives: &[usize],
    epoch: usize,
    config: &TrainConfig,
    scale: f64,
) -> Result<(Vec<LayerGrads>, Vec<f64>)> {
    let depth = network.layers.len();
    let kind = network.goodness;
    let params = network.prob;
    let zero = || -> Vec<LayerGrads> {
        network
            .layers
            .iter()
            .map(|l| LayerGrads::zeros(l.output_dim(), l.input_dim()))
            .collect()
    };
    let pairs: Vec<(usize, usize)> = batch.iter().copied().zip(negatives.iter().copied()).collect();
    let partials: Vec<(Vec<LayerGrads>, Vec<f64>)> = pairs
        .par_chunks(CHUNK)
        .map(|chunk| -> Result<(Vec<LayerGrads>, Vec<f64>)> {
            let mut grads = zero();
            let mut losses = vec![0.0; depth];
            for &(index, neg) in chunk {
                let image = data.flat(index);
                let passes = [
                    (Pass::Positive, data.label(index), purpose::ENCODE_POS),
                    (Pass::Negative, neg, purpose::ENCODE_NEG),
                ];
                for (pass, class, tag) in passes {
                    let extended = network.embed_label(&image, class)?;
                    let seed = rng::derive_seed(config.seed, &[tag, epoch as u64, index as u64]);
                    let outputs = network.forward(&extended, seed, depth, true)?;
                    for (l, (_, trace)) in outputs.iter().enumerate() {
                        losses[l] += layer_gradient(
                            &network.layers[l],
                            trace.as_ref(),
                            pass,
                            kind,
                            &params,
                            config.surrogate_slope,
                            scale,
                            &mut grads[l],
                        )?;
                    }
                }
            }
            Ok((grads, losses))
        })
        .collect::<Result<_>>()?;

    let mut grads = zero();
    let mut losses = vec![0.0; depth];
    for (g, l) in partials {
        for (acc, part) in grads.iter_mut().zip(&g) {
            acc.add_assign(part);
        }
        for (acc, part) in losses.iter_mut().zip(&l) {
            *acc += part;
        }
    }
    Ok((grads, losses))
}

/// Fraction of samples whose predicted label matches, using evaluation
/// encoding seeds derived from `seed`.
pub fn accuracy(network: &FfNetwork, data: &ImageSet, seed: u64) -> Result<f64> {
    if data.is_empty() {
        return Ok(0.0);
    }
    let hits = (0..data.len())
        .into_par_iter()
        .map(|i| -> Result<usize> {
            let pred = network.predict(&data.flat(i), FfNetwork::eval_seed(seed, i))?;
            Ok(usize::from(pred == data.label(i)))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .sum::<usize>();
    Ok(hits as f64 / data.len() as f64)
}

pub fn train(network: &mut FfNetwork, data: &ImageSet, config: &TrainConfig, validation: Option<&ImageSet>) -> Result<TrainLog> {
    train_with(network, data, config, validation, |_| {})
}

/// Layer-local training. Every layer takes one Adam step per batch on the
/// gradient of its own loss; its input (the previous layer's output) is a
/// constant.
pub fn train_with(
    network: &mut FfNetwork,
    data: &ImageSet,
    config: &TrainConfig,
    validation: Option<&ImageSet>,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainLog> {
    config.validate()?;
    if data.is_empty() {
        return Err(FfError::Consistency("empty training set".into()));
    }
    if data.class_count() != network.class_count() {
        return Err(FfError::Consistency(format!(
            "dataset has {} classes, network {}",
            data.class_count(),
            network.class_count()
        )));
    }
    if data.pixels() != network.image_dim {
        return Err(FfError::Shape(format!(
            "images have {} pixels, network expects {}",
            data.pixels(),
            network.image_dim
        )));
    }
    let mut optimizers: Vec<AdamState> = network
        .layers
        .iter()
        .map(|l| AdamState::new(l.output_dim(), l.input_dim()))
        .collect();
    let eval_set = (config.eval_samples > 0).then(|| data.take(config.eval_samples));
    let mut log = TrainLog::default();

    for epoch in 0..config.epochs {
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut rng::stream(config.seed, &[purpose::SHUFFLE, epoch as u64]));
        let mut epoch_losses = vec![0.0; network.layers.len()];

        for (b, batch) in order.chunks(config.batch_size).enumerate() {
            let snapshot: &FfNetwork = network;
            let negatives = batch
                .par_iter()
                .map(|&i| negative_class(snapshot, data, i, epoch, config))
                .collect::<Result<Vec<_>>>()?;
            let scale = 1.0 / batch.len() as f64;
            let (grads, losses) = batch_gradients(snapshot, data, batch, &negatives, epoch, config, scale)?;
            if losses.iter().any(|l| !l.is_finite()) || grads.iter().any(|g| !g.norm().is_finite()) {
                return Err(FfError::Training {
                    epoch,
                    batch: b,
                    message: format!("non-finite loss or gradient (losses {losses:?})"),
                });
            }
            for ((layer, adam), g) in network.layers.iter_mut().zip(&mut optimizers).zip(&grads) {
                let (w, bias) = layer.params_mut();
                adam.update(w, bias, g, config.learning_rate);
            }
            for (acc, l) in epoch_losses.iter_mut().zip(&losses) {
                *acc += l;
            }
        }

        let record = EpochRecord {
            epoch,
            layer_losses: epoch_losses.iter().map(|l| l / data.len() as f64).collect(),
            train_accuracy: eval_set
                .as_ref()
                .map(|s| accuracy(network, s, config.seed))
                .transpose()?,
            val_accuracy: validation.map(|v| accuracy(network, v, config.seed)).transpose()?,
        };
        on_epoch(&record);
        log.epochs.push(record);
    }
    Ok(log)
}
