use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Subcommand};
use ff_forge_core::data::Split;
use ff_forge_core::ffscp::{
    evaluate_latents, grid_search, reversal_diagnostic_from_latents, set_latents, Branch, GridSearch, ReversalReport,
};
use ff_forge_core::latent::build_store;
use ff_forge_core::rng;
use ff_forge_core::{BranchRule, FfScpParams, LatentStore, MetricsRow, OodScore, StoreConfig};
use serde::{Deserialize, Serialize};

use crate::common::{load_config, load_model, load_set, require, GlobalArgs, RunDir};
use crate::latents::{StoreArgs, StoreSummary};

#[derive(Debug, Subcommand)]
pub enum OodCommand {
    /// Score an ID and an OoD test set against a latent store
    Score(ScoreArgs),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OodRun {
    pub data_dir: Option<PathBuf>,
    pub model: Option<PathBuf>,
    /// Existing store; built from the ID training split when absent.
    pub store: Option<PathBuf>,
    pub store_config: StoreConfig,
    pub id_set: String,
    pub ood_set: String,
    /// Test samples scored per side.
    pub limit: Option<usize>,
    pub params: FfScpParams,
    /// Score every standard parameter combination.
    pub grid: bool,
    pub seed: u64,
}

impl Default for OodRun {
    fn default() -> Self {
        OodRun {
            data_dir: None,
            model: None,
            store: None,
            store_config: StoreConfig::default(),
            id_set: "mnist".into(),
            ood_set: "notmnist".into(),
            limit: None,
            params: FfScpParams::default(),
            grid: false,
            seed: 0,
        }
    }
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    model: Option<PathBuf>,
    /// Latent store written by `latents build`
    #[arg(long)]
    store: Option<PathBuf>,
    #[arg(long = "id-set", visible_alias = "id")]
    id_set: Option<String>,
    #[arg(long = "ood-set", visible_alias = "ood")]
    ood_set: Option<String>,
    /// Test samples scored per side
    #[arg(long)]
    limit: Option<usize>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    zero_scale: Option<f64>,
    /// equation | algorithm
    #[arg(long)]
    rule: Option<BranchRule>,
    /// Score the full (beta, gamma, zero-scale) grid
    #[arg(long)]
    grid: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    store_args: StoreArgs,
}

#[derive(Debug, Serialize)]
struct OodSummary {
    id_set: String,
    ood_set: String,
    id_samples: usize,
    ood_samples: usize,
    store: StoreSummary,
    params: FfScpParams,
    metrics: MetricsRow,
    reversed_id: usize,
    reversed_ood: usize,
    diagnostic: ReversalReport,
    /// Selection uses even-indexed samples, reporting the odd-indexed ones.
    grid: Option<GridSearch>,
}

fn rule_name(rule: BranchRule) -> &'static str {
    match rule {
        BranchRule::Equation => "equation",
        BranchRule::Algorithm => "algorithm",
    }
}

fn branch_name(branch: Branch) -> &'static str {
    match branch {
        Branch::Normal => "normal",
        Branch::Reversed => "reversed",
    }
}

pub fn scores_csv(id: &[OodScore], ood: &[OodScore]) -> String {
    let mut out = String::from("sample,set,s,s0,branch,score,argmin_class\n");
    for (set, scores) in [("id", id), ("ood", ood)] {
        for (i, s) in scores.iter().enumerate() {
            let _ = writeln!(
                out,
                "{i},{set},{:?},{:?},{},{:?},{}",
                s.s,
                s.s0,
                branch_name(s.branch),
                s.score,
                s.argmin_class
            );
        }
    }
    out
}

fn metrics_line(out: &mut String, p: &FfScpParams, m: &MetricsRow) {
    let _ = writeln!(
        out,
        "{:?},{:?},{:?},{},{:?},{:?},{:?}",
        p.beta,
        p.gamma,
        p.zero_scale,
        rule_name(p.rule),
        m.auroc,
        m.aupr,
        m.fpr95
    );
}

pub fn run(command: &OodCommand, global: &GlobalArgs) -> Result<()> {
    let OodCommand::Score(args) = command;
    let mut cfg: OodRun = load_config(global.config.as_deref())?;
    cfg.model = args.model.clone().or(cfg.model);
    cfg.store = args.store.clone().or(cfg.store);
    if let Some(s) = &args.id_set {
        cfg.id_set = s.clone();
    }
    if let Some(s) = &args.ood_set {
        cfg.ood_set = s.clone();
    }
    cfg.limit = args.limit.or(cfg.limit);
    cfg.params.beta = args.beta.unwrap_or(cfg.params.beta);
    cfg.params.gamma = args.gamma.unwrap_or(cfg.params.gamma);
    cfg.params.zero_scale = args.zero_scale.unwrap_or(cfg.params.zero_scale);
    cfg.params.rule = args.rule.unwrap_or(cfg.params.rule);
    cfg.grid |= args.grid;
    cfg.seed = args.seed.unwrap_or(cfg.seed);
    args.store_args.apply(&mut cfg.store_config);
    let data_dir = global.data_dir(cfg.data_dir.clone());
    cfg.data_dir = Some(data_dir.clone());
    let model = require(&cfg.model, "--model")?;
    cfg.params.validate()?;

    let out = RunDir::create(global.out.as_deref(), "ood")?;
    out.write_json("config.json", &cfg)?;
    let net = load_model(&model)?;
    let store = match &cfg.store {
        Some(path) => LatentStore::load(path).with_context(|| format!("loading latent store {}", path.display()))?,
        None => {
            let train = load_set(&data_dir, &cfg.id_set, Split::Train, None)?;
            let store = build_store(&net, &train, &cfg.store_config).context("building latent store")?;
            store.save(out.file("store.ffls"))?;
            store
        }
    };
    let id = load_set(&data_dir, &cfg.id_set, Split::Test, cfg.limit)?;
    let ood = load_set(&data_dir, &cfg.ood_set, Split::Test, cfg.limit)?;
    let id_latents = set_latents(&net, &id, rng::derive_seed(cfg.seed, &[1]))?;
    let ood_latents = set_latents(&net, &ood, rng::derive_seed(cfg.seed, &[2]))?;

    let mut metrics_csv = String::from("beta,gamma,zero_scale,rule,auroc,aupr,fpr95\n");
    let (params, grid) = if cfg.grid {
        let search = grid_search(&id_latents, &ood_latents, &store, cfg.params.rule)?;
        for p in &search.skipped {
            eprintln!(
                "warning: skipped beta {} gamma {:e} zero-scale {}: gamma does not exceed a reversed-branch score",
                p.beta, p.gamma, p.zero_scale
            );
        }
        for row in &search.rows {
            let (_, _, m) = evaluate_latents(&id_latents, &ood_latents, &store, &row.params)?;
            metrics_line(&mut metrics_csv, &row.params, &m);
        }
        (search.best().params, Some(search))
    } else {
        (cfg.params, None)
    };
    let (id_scores, ood_scores, metrics) = evaluate_latents(&id_latents, &ood_latents, &store, &params)?;
    if grid.is_none() {
        metrics_line(&mut metrics_csv, &params, &metrics);
    }
    out.write("scores.csv", scores_csv(&id_scores, &ood_scores))?;
    out.write("metrics.csv", metrics_csv)?;

    let reversed = |v: &[OodScore]| v.iter().filter(|s| s.branch == Branch::Reversed).count();
    let summary = OodSummary {
        id_set: cfg.id_set.clone(),
        ood_set: cfg.ood_set.clone(),
        id_samples: id.len(),
        ood_samples: ood.len(),
        store: StoreSummary::of(&store),
        params,
        metrics,
        reversed_id: reversed(&id_scores),
        reversed_ood: reversed(&ood_scores),
        diagnostic: reversal_diagnostic_from_latents(&store, &id_latents)?,
        grid,
    };
    out.write_json("summary.json", &summary)?;
    println!(
        "{} vs {}: AUROC {:.4}  AUPR {:.4}  FPR95 {:.4}",
        cfg.id_set, cfg.ood_set, metrics.auroc, metrics.aupr, metrics.fpr95
    );
    if summary.diagnostic.flagged {
        eprintln!(
            "warning: origin is closer to the class sets ({:.3}) than typical ID latents ({:.3})",
            summary.diagnostic.lhs, summary.diagnostic.rhs
        );
    }
    Ok(())
}
