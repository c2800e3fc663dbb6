use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use ff_forge_core::{MetricsRow, ScoreTable};
use serde::{Deserialize, Serialize};

use crate::common::{load_config, require, GlobalArgs, RunDir};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsRun {
    pub scores: Option<PathBuf>,
    /// Row label, e.g. `mnist/notmnist`.
    pub name: Option<String>,
    /// CSV table the row is appended to.
    pub append: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    /// Score CSV written by `ood score`
    #[arg(long)]
    scores: Option<PathBuf>,
    #[arg(long)]
    name: Option<String>,
    /// Append the row to this CSV, writing a header when it is new
    #[arg(long)]
    append: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct MetricsReport {
    name: String,
    id_samples: usize,
    ood_samples: usize,
    #[serde(flatten)]
    metrics: MetricsRow,
}

const TABLE_HEADER: &str = "name,auroc,aupr,fpr95\n";

/// Reads the `set` and `score` columns of a score CSV.
pub fn read_scores(path: &Path) -> Result<ScoreTable> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().context("empty score file")?.split(',').collect();
    let column = |name: &str| header.iter().position(|h| h.trim() == name).with_context(|| format!("no '{name}' column"));
    let (set_col, score_col) = (column("set")?, column("score")?);
    let (mut id, mut ood) = (Vec::new(), Vec::new());
    for (n, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let fields: Vec<&str> = line.split(',').collect();
        let get = |c: usize| fields.get(c).map(|f| f.trim()).with_context(|| format!("line {} is short", n + 2));
        let score: f64 = get(score_col)?.parse().with_context(|| format!("bad score on line {}", n + 2))?;
        match get(set_col)? {
            "id" => id.push(score),
            "ood" => ood.push(score),
            other => bail!("unknown set '{other}' on line {}", n + 2),
        }
    }
    Ok(ScoreTable::new(id, ood)?)
}

pub fn run(args: &MetricsArgs, global: &GlobalArgs) -> Result<()> {
    let mut cfg: MetricsRun = load_config(global.config.as_deref())?;
    cfg.scores = args.scores.clone().or(cfg.scores);
    cfg.name = args.name.clone().or(cfg.name);
    cfg.append = args.append.clone().or(cfg.append);
    let scores = require(&cfg.scores, "--scores")?;

    let out = RunDir::create(global.out.as_deref(), "metrics")?;
    out.write_json("config.json", &cfg)?;
    let table = read_scores(&scores)?;
    let metrics = MetricsRow::compute(&table);
    let name = cfg.name.clone().unwrap_or_else(|| "run".into());
    let row = format!("{name},{:?},{:?},{:?}\n", metrics.auroc, metrics.aupr, metrics.fpr95);
    out.write("metrics.csv", format!("{TABLE_HEADER}{row}"))?;
    out.write_json(
        "metrics.json",
        &MetricsReport {
            name,
            id_samples: table.id_scores().len(),
            ood_samples: table.ood_scores().len(),
            metrics,
        },
    )?;
    if let Some(path) = &cfg.append {
        let fresh = !path.exists();
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .with_context(|| format!("opening {}", path.display()))?;
        if fresh {
            f.write_all(TABLE_HEADER.as_bytes())?;
        }
        f.write_all(row.as_bytes())?;
    }
    println!("AUROC {:.4}  AUPR {:.4}  FPR95 {:.4}", metrics.auroc, metrics.aupr, metrics.fpr95);
    Ok(())
}
