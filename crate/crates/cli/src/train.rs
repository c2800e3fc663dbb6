use std::path::PathBuf;

use anyhow::{ensure, Context, Result};
use clap::{Args, ValueEnum};
use ff_forge_core::data::{ImageSet, Split, IMAGE_DIM};
use ff_forge_core::ffa::checkpoint::save_network;
use ff_forge_core::ffa::{accuracy, train_with};
use ff_forge_core::{FfNetwork, GoodnessKind, NegativeMode, NetworkConfig, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::common::{load_config, load_set, GlobalArgs, RunDir};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Negatives {
    Random,
    Greedy,
    Both,
}

impl Negatives {
    fn modes(self) -> Vec<NegativeMode> {
        match self {
            Negatives::Random => vec![NegativeMode::RandomWrong],
            Negatives::Greedy => vec![NegativeMode::Greedy],
            Negatives::Both => vec![NegativeMode::RandomWrong, NegativeMode::Greedy],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// Full-size defaults: 2x1400 layers, 10 epochs, batch 512
    Full,
    /// 2x200 layers, 5 epochs, batch 256
    Desk,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainRun {
    pub data_dir: Option<PathBuf>,
    pub dataset: String,
    pub train_limit: Option<usize>,
    pub validation_fraction: f64,
    pub network: NetworkConfig,
    pub epochs: usize,
    pub batch_size: usize,
    /// Filled from the goodness family when absent.
    pub learning_rate: Option<f64>,
    pub surrogate_slope: f64,
    pub eval_samples: usize,
    pub negatives: Negatives,
    pub seed: u64,
}

impl Default for TrainRun {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainRun {
            data_dir: None,
            dataset: "mnist".into(),
            train_limit: None,
            validation_fraction: 0.1,
            network: NetworkConfig::default(),
            epochs: t.epochs,
            batch_size: t.batch_size,
            learning_rate: None,
            surrogate_slope: t.surrogate_slope,
            eval_samples: t.eval_samples,
            negatives: Negatives::Both,
            seed: 0,
        }
    }
}

impl TrainRun {
    fn preset(preset: Preset, goodness: GoodnessKind) -> Self {
        let mut run = TrainRun::default();
        run.network.goodness = goodness;
        if preset == Preset::Desk {
            run.network.layers = vec![200, 200];
            run.epochs = 5;
            run.batch_size = 256;
            if !goodness.is_spiking() {
                run.learning_rate = Some(0.005);
            }
        }
        run
    }

    fn train_config(&self, mode: NegativeMode) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate.unwrap_or(TrainConfig::for_goodness(self.network.goodness).learning_rate),
            negative_mode: mode,
            surrogate_slope: self.surrogate_slope,
            seed: self.seed,
            eval_samples: self.eval_samples,
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Starting point for settings not given by flags
    #[arg(long, value_enum, conflicts_with = "config")]
    preset: Option<Preset>,
    /// unbounded | bounded | analog
    #[arg(long)]
    goodness: Option<GoodnessKind>,
    #[arg(long)]
    dataset: Option<String>,
    /// Hidden layer widths, comma separated
    #[arg(long, value_delimiter = ',')]
    layers: Option<Vec<usize>>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long = "lr")]
    learning_rate: Option<f64>,
    #[arg(long, value_enum)]
    negative: Option<Negatives>,
    /// Use only the first N training samples
    #[arg(long)]
    train_limit: Option<usize>,
    /// Held-out share of the training set used for model selection
    #[arg(long)]
    val_fraction: Option<f64>,
    /// Training samples scored after each epoch (0 disables)
    #[arg(long)]
    eval_samples: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Serialize)]
struct ModeSummary {
    negative_mode: NegativeMode,
    checkpoint: String,
    log: String,
    final_layer_losses: Vec<f64>,
    validation_accuracy: Option<f64>,
}

#[derive(Debug, Serialize)]
struct TrainSummary {
    dataset: String,
    goodness: GoodnessKind,
    train_samples: usize,
    validation_samples: usize,
    runs: Vec<ModeSummary>,
    selected: NegativeMode,
}

fn mode_name(mode: NegativeMode) -> &'static str {
    match mode {
        NegativeMode::RandomWrong => "random",
        NegativeMode::Greedy => "greedy",
    }
}

pub fn run(args: &TrainArgs, global: &GlobalArgs) -> Result<()> {
    let mut cfg: TrainRun = match (args.preset, &global.config) {
        (Some(p), _) => TrainRun::preset(p, args.goodness.unwrap_or(GoodnessKind::UnboundedSpiking)),
        (None, path) => load_config(path.as_deref())?,
    };
    if let Some(g) = args.goodness {
        cfg.network.goodness = g;
    }
    if let Some(d) = &args.dataset {
        cfg.dataset = d.clone();
    }
    if let Some(l) = &args.layers {
        cfg.network.layers = l.clone();
    }
    cfg.epochs = args.epochs.unwrap_or(cfg.epochs);
    cfg.batch_size = args.batch_size.unwrap_or(cfg.batch_size);
    cfg.learning_rate = args.learning_rate.or(cfg.learning_rate);
    cfg.negatives = args.negative.unwrap_or(cfg.negatives);
    cfg.train_limit = args.train_limit.or(cfg.train_limit);
    cfg.validation_fraction = args.val_fraction.unwrap_or(cfg.validation_fraction);
    cfg.eval_samples = args.eval_samples.unwrap_or(cfg.eval_samples);
    cfg.seed = args.seed.unwrap_or(cfg.seed);
    let data_dir = global.data_dir(cfg.data_dir.clone());
    cfg.data_dir = Some(data_dir.clone());
    cfg.learning_rate = Some(cfg.train_config(NegativeMode::RandomWrong).learning_rate);

    let out = RunDir::create(global.out.as_deref(), "train")?;
    out.write_json("config.json", &cfg)?;

    let data = load_set(&data_dir, &cfg.dataset, Split::Train, cfg.train_limit)?;
    let (train_set, val_set) = if cfg.validation_fraction > 0.0 {
        let (t, v) = data.split_validation(cfg.validation_fraction, cfg.seed)?;
        (t, Some(v))
    } else {
        (data, None)
    };
    ensure!(!train_set.is_empty(), "no training samples left after the validation split");

    let mut runs = Vec::new();
    let mut best: Option<(f64, FfNetwork, NegativeMode)> = None;
    for mode in cfg.negatives.modes() {
        let (net, summary) = train_mode(&cfg, mode, &train_set, val_set.as_ref(), &out)?;
        let score = summary.validation_accuracy.unwrap_or(f64::NEG_INFINITY);
        if best.as_ref().map_or(true, |(b, _, _)| score > *b) {
            best = Some((score, net, mode));
        }
        runs.push(summary);
    }
    let (_, net, selected) = best.context("no negative mode selected")?;
    save_network(&net, out.file("network.ffnt"))?;
    out.write_json(
        "summary.json",
        &TrainSummary {
            dataset: cfg.dataset.clone(),
            goodness: cfg.network.goodness,
            train_samples: train_set.len(),
            validation_samples: val_set.as_ref().map_or(0, ImageSet::len),
            runs,
            selected,
        },
    )?;
    eprintln!("selected {} negatives; wrote {}", mode_name(selected), out.path().display());
    Ok(())
}

fn train_mode(
    cfg: &TrainRun,
    mode: NegativeMode,
    train_set: &ImageSet,
    val_set: Option<&ImageSet>,
    out: &RunDir,
) -> Result<(FfNetwork, ModeSummary)> {
    let name = mode_name(mode);
    let mut net = FfNetwork::new(&cfg.network, IMAGE_DIM, train_set.class_count(), cfg.seed)?;
    let tc = cfg.train_config(mode);
    let log = train_with(&mut net, train_set, &tc, None, |rec| {
        let losses: Vec<String> = rec.layer_losses.iter().map(|l| format!("{l:.4}")).collect();
        let acc = rec.train_accuracy.map_or(String::new(), |a| format!(" train acc {a:.4}"));
        eprintln!("[{name}] epoch {} losses [{}]{acc}", rec.epoch + 1, losses.join(", "));
    })
    .with_context(|| format!("training with {name} negatives"))?;
    let validation_accuracy = match val_set {
        Some(v) => Some(accuracy(&net, v, cfg.seed)?),
        None => None,
    };
    if let Some(a) = validation_accuracy {
        eprintln!("[{name}] validation accuracy {a:.4}");
    }
    let checkpoint = format!("network-{name}.ffnt");
    let log_name = format!("train_log-{name}.csv");
    save_network(&net, out.file(&checkpoint))?;
    out.write(&log_name, log.to_csv())?;
    let summary = ModeSummary {
        negative_mode: mode,
        checkpoint,
        log: log_name,
        final_layer_losses: log.epochs.last().map(|r| r.layer_losses.clone()).unwrap_or_default(),
        validation_accuracy,
    };
    Ok((net, summary))
}
