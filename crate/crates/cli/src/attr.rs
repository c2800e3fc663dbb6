use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use clap::Args;
use ff_forge_core::attribution::{alpha_preset, get_attribution, grayscale_pgm, heatmap_ppm, map_csv, train_decoder};
use ff_forge_core::data::{apply_obstruction, obstruction_mask, Obstruction, ObstructionKind, Split, IMAGE_SIDE};
use ff_forge_core::{AttributionConfig, AttributionResult, Decoder, DecoderConfig, LatentStore};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::common::{load_config, load_model, load_set, parse_split, require, GlobalArgs, RunDir};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AttrRun {
    pub data_dir: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub store: Option<PathBuf>,
    /// Trained on `decoder_dataset` and saved with the outputs when absent.
    pub decoder: Option<PathBuf>,
    pub decoder_config: DecoderConfig,
    pub decoder_dataset: String,
    pub decoder_limit: Option<usize>,
    /// Dataset name, or a path to a 28x28 PNG.
    pub input: String,
    pub split: String,
    pub index: usize,
    /// Target class; defaults to the dataset label.
    pub class: Option<usize>,
    pub obstruction: Option<ObstructionKind>,
    pub obstruction_seed: u64,
    pub attribution: AttributionConfig,
}

impl Default for AttrRun {
    fn default() -> Self {
        AttrRun {
            data_dir: None,
            model: None,
            store: None,
            decoder: None,
            decoder_config: DecoderConfig::default(),
            decoder_dataset: "mnist".into(),
            decoder_limit: None,
            input: "mnist".into(),
            split: "test".into(),
            index: 0,
            class: None,
            obstruction: None,
            obstruction_seed: 0,
            attribution: AttributionConfig::default(),
        }
    }
}

#[derive(Debug, Args)]
pub struct AttrArgs {
    #[arg(long)]
    model: Option<PathBuf>,
    /// Latent store written by `latents build`
    #[arg(long)]
    store: Option<PathBuf>,
    /// Decoder file; trained and saved alongside the outputs when omitted
    #[arg(long)]
    decoder: Option<PathBuf>,
    #[arg(long)]
    decoder_epochs: Option<usize>,
    /// Training samples used to fit a new decoder
    #[arg(long)]
    decoder_limit: Option<usize>,
    /// Dataset name or path to a 28x28 PNG
    #[arg(long)]
    input: Option<String>,
    /// train | test
    #[arg(long)]
    split: Option<String>,
    /// Sample index within the dataset split
    #[arg(long)]
    index: Option<usize>,
    /// Target class (required for PNG input)
    #[arg(long, visible_alias = "label")]
    class: Option<usize>,
    /// square | gaussian | stripe-off | stripe-on
    #[arg(long)]
    obstruction: Option<ObstructionKind>,
    #[arg(long)]
    obstruction_seed: Option<u64>,
    #[arg(long, conflicts_with = "preset")]
    alpha: Option<f64>,
    /// Alpha by obstruction family: square, stripe-on, gaussian, stripe-off
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Serialize)]
struct AttrRecord {
    input: String,
    index: Option<usize>,
    true_label: Option<usize>,
    obstruction: Option<Obstruction>,
    decoder_trained: bool,
    /// Mean |map| inside the obstructed pixels over the mean outside.
    localization_ratio: Option<f64>,
    result: AttributionResult,
}

fn load_png(path: &Path) -> Result<Array2<f32>> {
    let img = image::open(path).with_context(|| format!("reading {}", path.display()))?.to_luma8();
    let (w, h) = img.dimensions();
    ensure!(
        (w as usize, h as usize) == (IMAGE_SIDE, IMAGE_SIDE),
        "{} is {w}x{h}, expected {IMAGE_SIDE}x{IMAGE_SIDE}",
        path.display()
    );
    Ok(Array2::from_shape_fn((IMAGE_SIDE, IMAGE_SIDE), |(y, x)| {
        f32::from(img.get_pixel(x as u32, y as u32).0[0]) / 255.0
    }))
}

pub fn localization_ratio(map: &[f64], mask: &Array2<bool>) -> Option<f64> {
    let (mut inside, mut n_in, mut outside, mut n_out) = (0.0, 0usize, 0.0, 0usize);
    for (m, &hit) in map.iter().zip(mask.iter()) {
        if hit {
            inside += m.abs();
            n_in += 1;
        } else {
            outside += m.abs();
            n_out += 1;
        }
    }
    (n_in > 0 && n_out > 0).then(|| (inside / n_in as f64) / (outside / n_out as f64))
}

pub fn run(args: &AttrArgs, global: &GlobalArgs) -> Result<()> {
    let mut cfg: AttrRun = load_config(global.config.as_deref())?;
    cfg.model = args.model.clone().or(cfg.model);
    cfg.store = args.store.clone().or(cfg.store);
    cfg.decoder = args.decoder.clone().or(cfg.decoder);
    cfg.decoder_config.epochs = args.decoder_epochs.unwrap_or(cfg.decoder_config.epochs);
    cfg.decoder_limit = args.decoder_limit.or(cfg.decoder_limit);
    if let Some(i) = &args.input {
        cfg.input = i.clone();
    }
    if let Some(s) = &args.split {
        cfg.split = s.clone();
    }
    cfg.index = args.index.unwrap_or(cfg.index);
    cfg.class = args.class.or(cfg.class);
    cfg.obstruction = args.obstruction.or(cfg.obstruction);
    cfg.obstruction_seed = args.obstruction_seed.unwrap_or(cfg.obstruction_seed);
    if let Some(name) = &args.preset {
        cfg.attribution.alpha = alpha_preset(name).with_context(|| format!("unknown alpha preset '{name}'"))?;
    }
    cfg.attribution.alpha = args.alpha.unwrap_or(cfg.attribution.alpha);
    if let Some(seed) = args.seed {
        cfg.attribution.encode_seed = seed;
        cfg.decoder_config.seed = seed;
    }
    let data_dir = global.data_dir(cfg.data_dir.clone());
    cfg.data_dir = Some(data_dir.clone());
    let model = require(&cfg.model, "--model")?;
    let store_path = require(&cfg.store, "--store")?;

    let out = RunDir::create(global.out.as_deref(), "attr")?;
    out.write_json("config.json", &cfg)?;
    let store = LatentStore::load(&store_path)
        .with_context(|| format!("loading latent store {}", store_path.display()))?;
    let net = load_model(&model)?;

    let is_png = Path::new(&cfg.input).extension().is_some_and(|e| e.eq_ignore_ascii_case("png"));
    let (image, index, true_label) = if is_png {
        (load_png(Path::new(&cfg.input))?, None, None)
    } else {
        let data = load_set(&data_dir, &cfg.input, parse_split(&cfg.split)?, None)?;
        ensure!(cfg.index < data.len(), "index {} outside 0..{}", cfg.index, data.len());
        (data.image(cfg.index).to_owned(), Some(cfg.index), Some(data.label(cfg.index)))
    };
    let class = match (cfg.class, true_label) {
        (Some(c), _) | (None, Some(c)) => c,
        (None, None) => bail!("--class is required for PNG input"),
    };
    let obstruction = cfg.obstruction.map(|k| Obstruction::new(k, cfg.obstruction_seed));
    let image = match &obstruction {
        Some(o) => apply_obstruction(image.view(), o)?,
        None => image,
    };
    let pixels: Vec<f64> = image.iter().map(|&v| f64::from(v)).collect();

    let (decoder, decoder_trained) = match &cfg.decoder {
        Some(path) => (Decoder::load(path).with_context(|| format!("loading decoder {}", path.display()))?, false),
        None => {
            let train = load_set(&data_dir, &cfg.decoder_dataset, Split::Train, cfg.decoder_limit)?;
            let (decoder, log) = train_decoder(&net, &train, &cfg.decoder_config).context("training decoder")?;
            if let (Some(first), Some(last)) = (log.first(), log.last()) {
                eprintln!("decoder BCE {first:.4} -> {last:.4}");
            }
            decoder.save(out.file("decoder.ffdc"))?;
            (decoder, true)
        }
    };

    let result = get_attribution(&pixels, class, &net, &decoder, &store, &cfg.attribution)?;
    out.write("reconstruction.pgm", grayscale_pgm(&result.reconstruction)?)?;
    out.write("heatmap.ppm", heatmap_ppm(&result.map)?)?;
    out.write("map.csv", map_csv(&result.map)?)?;
    let localization_ratio = obstruction
        .filter(|o| o.kind != ObstructionKind::Gaussian)
        .and_then(|o| localization_ratio(&result.map, &obstruction_mask(&o)));
    let record = AttrRecord {
        input: cfg.input.clone(),
        index,
        true_label,
        obstruction,
        decoder_trained,
        localization_ratio,
        result,
    };
    out.write_json("result.json", &record)?;
    println!(
        "class {class}: decoder distance {:.4}, latent distance {:.4}, {} steps",
        record.result.decoder_distance, record.result.latent_distance, record.result.iterations
    );
    Ok(())
}
