use std::path::PathBuf;

use anyhow::Result;
use clap::Args;
use ff_forge_core::FfNetwork;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::common::{load_config, load_model, load_set, parse_split, require, GlobalArgs, RunDir};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalRun {
    pub data_dir: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub dataset: String,
    pub split: String,
    pub limit: Option<usize>,
    pub seed: u64,
}

impl Default for EvalRun {
    fn default() -> Self {
        EvalRun {
            data_dir: None,
            model: None,
            dataset: "mnist".into(),
            split: "test".into(),
            limit: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Network checkpoint written by `train`
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<String>,
    /// train | test
    #[arg(long)]
    split: Option<String>,
    #[arg(long)]
    limit: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Serialize)]
struct EvalReport {
    samples: usize,
    accuracy: f64,
    per_class_accuracy: Vec<Option<f64>>,
    /// `confusion[true][predicted]`
    confusion: Vec<Vec<usize>>,
}

pub fn run(args: &EvalArgs, global: &GlobalArgs) -> Result<()> {
    let mut cfg: EvalRun = load_config(global.config.as_deref())?;
    cfg.model = args.model.clone().or(cfg.model);
    if let Some(d) = &args.dataset {
        cfg.dataset = d.clone();
    }
    if let Some(s) = &args.split {
        cfg.split = s.clone();
    }
    cfg.limit = args.limit.or(cfg.limit);
    cfg.seed = args.seed.unwrap_or(cfg.seed);
    let data_dir = global.data_dir(cfg.data_dir.clone());
    cfg.data_dir = Some(data_dir.clone());
    let model = require(&cfg.model, "--model")?;
    let split = parse_split(&cfg.split)?;

    let out = RunDir::create(global.out.as_deref(), "eval")?;
    out.write_json("config.json", &cfg)?;
    let net = load_model(&model)?;
    let data = load_set(&data_dir, &cfg.dataset, split, cfg.limit)?;

    let predictions = (0..data.len())
        .into_par_iter()
        .map(|i| net.predict(&data.flat(i), FfNetwork::eval_seed(cfg.seed, i)))
        .collect::<ff_forge_core::Result<Vec<_>>>()?;
    let classes = net.class_count().max(data.class_count());
    let mut confusion = vec![vec![0usize; classes]; classes];
    for (i, &p) in predictions.iter().enumerate() {
        confusion[data.label(i)][p] += 1;
    }
    let hits: usize = (0..classes).map(|c| confusion[c][c]).sum();
    let per_class_accuracy = confusion
        .iter()
        .enumerate()
        .map(|(c, row)| {
            let n: usize = row.iter().sum();
            (n > 0).then(|| row[c] as f64 / n as f64)
        })
        .collect();
    let report = EvalReport {
        samples: data.len(),
        accuracy: if data.is_empty() { 0.0 } else { hits as f64 / data.len() as f64 },
        per_class_accuracy,
        confusion,
    };
    out.write_json("eval.json", &report)?;
    println!("accuracy {:.4} on {} samples", report.accuracy, report.samples);
    Ok(())
}
