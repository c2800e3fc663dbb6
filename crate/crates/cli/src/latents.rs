use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Subcommand};
use ff_forge_core::data::Split;
use ff_forge_core::latent::build_store;
use ff_forge_core::{DistanceKind, LatentStore, StoreConfig};
use serde::{Deserialize, Serialize};

use crate::common::{load_config, load_model, load_set, require, GlobalArgs, RunDir};

#[derive(Debug, Subcommand)]
pub enum LatentsCommand {
    /// Build a filtered latent store from training samples
    Build(BuildArgs),
    /// Dump a store's vectors
    Export(ExportArgs),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BuildRun {
    pub data_dir: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub dataset: String,
    pub store: StoreConfig,
}

impl Default for BuildRun {
    fn default() -> Self {
        BuildRun {
            data_dir: None,
            model: None,
            dataset: "mnist".into(),
            store: StoreConfig::default(),
        }
    }
}

/// Store flags shared with `ood score`.
#[derive(Debug, Args)]
pub struct StoreArgs {
    /// Samples drawn (class-balanced) from the training split
    #[arg(long)]
    pub samples: Option<usize>,
    /// Fraction removed from each set by Manhattan norm
    #[arg(long)]
    pub filter: Option<f64>,
    /// manhattan | euclidean | cosine
    #[arg(long)]
    pub distance: Option<DistanceKind>,
    #[arg(long)]
    pub store_seed: Option<u64>,
}

impl StoreArgs {
    pub fn apply(&self, cfg: &mut StoreConfig) {
        cfg.samples = self.samples.unwrap_or(cfg.samples);
        cfg.filter_fraction = self.filter.unwrap_or(cfg.filter_fraction);
        cfg.distance = self.distance.unwrap_or(cfg.distance);
        cfg.seed = self.store_seed.unwrap_or(cfg.seed);
    }
}

#[derive(Debug, Args)]
pub struct BuildArgs {
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<String>,
    #[command(flatten)]
    store: StoreArgs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExportRun {
    pub store: Option<PathBuf>,
    pub format: String,
}

impl Default for ExportRun {
    fn default() -> Self {
        ExportRun {
            store: None,
            format: "csv".into(),
        }
    }
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long)]
    store: Option<PathBuf>,
    /// Only `csv` is supported
    #[arg(long)]
    format: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct StoreSummary {
    pub class_count: usize,
    pub dim: usize,
    pub sample_count: usize,
    pub filter_fraction: f64,
    pub distance: DistanceKind,
    pub total_vectors: usize,
    /// `set_sizes[c][p]`
    pub set_sizes: Vec<Vec<usize>>,
}

impl StoreSummary {
    pub fn of(store: &LatentStore) -> Self {
        let c = store.class_count();
        StoreSummary {
            class_count: c,
            dim: store.dim(),
            sample_count: store.sample_count(),
            filter_fraction: store.filter_fraction(),
            distance: store.distance_kind(),
            total_vectors: store.total_len(),
            set_sizes: (0..c).map(|a| (0..c).map(|p| store.set(a, p).len()).collect()).collect(),
        }
    }
}

pub fn run(command: &LatentsCommand, global: &GlobalArgs) -> Result<()> {
    match command {
        LatentsCommand::Build(args) => build(args, global),
        LatentsCommand::Export(args) => export(args, global),
    }
}

fn build(args: &BuildArgs, global: &GlobalArgs) -> Result<()> {
    let mut cfg: BuildRun = load_config(global.config.as_deref())?;
    cfg.model = args.model.clone().or(cfg.model);
    if let Some(d) = &args.dataset {
        cfg.dataset = d.clone();
    }
    args.store.apply(&mut cfg.store);
    let data_dir = global.data_dir(cfg.data_dir.clone());
    cfg.data_dir = Some(data_dir.clone());
    let model = require(&cfg.model, "--model")?;

    let out = RunDir::create(global.out.as_deref(), "latents")?;
    out.write_json("config.json", &cfg)?;
    let net = load_model(&model)?;
    let data = load_set(&data_dir, &cfg.dataset, Split::Train, None)?;
    let store = build_store(&net, &data, &cfg.store).context("building latent store")?;
    store.save(out.file("store.ffls"))?;
    out.write_json("store.json", &StoreSummary::of(&store))?;
    eprintln!("stored {} vectors of dimension {}", store.total_len(), store.dim());
    Ok(())
}

fn export(args: &ExportArgs, global: &GlobalArgs) -> Result<()> {
    let mut cfg: ExportRun = load_config(global.config.as_deref())?;
    cfg.store = args.store.clone().or(cfg.store);
    if let Some(f) = &args.format {
        cfg.format = f.clone();
    }
    if cfg.format != "csv" {
        bail!("unsupported export format '{}' (expected csv)", cfg.format);
    }
    let path = require(&cfg.store, "--store")?;
    let out = RunDir::create(global.out.as_deref(), "latents-export")?;
    out.write_json("config.json", &cfg)?;
    let store = LatentStore::load(&path).with_context(|| format!("loading latent store {}", path.display()))?;
    let target = out.file("latents.csv");
    let file = File::create(&target).with_context(|| format!("creating {}", target.display()))?;
    let mut writer = BufWriter::new(file);
    store.export_csv(&mut writer)?;
    writer.flush()?;
    eprintln!("exported {} rows", store.total_len());
    Ok(())
}
