//! FF-SCP out-of-distribution scoring over a latent store.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::ImageSet;
use crate::error::{FfError, Result};
use crate::ffa::FfNetwork;
use crate::latent::{point_set_distance, LatentStore};
use crate::metrics::{MetricsRow, ScoreTable};

/// Which condition selects the reversed branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BranchRule {
    /// Reversed when `s > z * s0`.
    #[default]
    Equation,
    /// Reversed when `s < z * s0`, the reading of the pseudo-code's return
    /// statement.
    Algorithm,
}

impl std::str::FromStr for BranchRule {
    type Err = FfError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "equation" => Ok(Self::Equation),
            "algorithm" => Ok(Self::Algorithm),
            other => Err(FfError::Config(format!("unknown branch rule '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FfScpParams {
    /// Exponent applied to each point-set distance before summing.
    pub beta: f64,
    pub gamma: f64,
    pub zero_scale: f64,
    pub rule: BranchRule,
}

impl Default for FfScpParams {
    fn default() -> Self {
        FfScpParams {
            beta: 1.0,
            gamma: 1e4,
            zero_scale: 1.0,
            rule: BranchRule::Equation,
        }
    }
}

impl FfScpParams {
    pub const BETAS: [f64; 2] = [1.0, 2.0];
    pub const GAMMAS: [f64; 2] = [1e4, 1e6];
    pub const ZERO_SCALES: [f64; 4] = [0.85, 1.0, 1.15, 1.4];

    /// Every combination of the standard parameter sets.
    pub fn grid(rule: BranchRule) -> Vec<FfScpParams> {
        let mut out = Vec::new();
        for beta in Self::BETAS {
            for gamma in Self::GAMMAS {
                for zero_scale in Self::ZERO_SCALES {
                    out.push(FfScpParams {
                        beta,
                        gamma,
                        zero_scale,
                        rule,
                    });
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0) || !(self.zero_scale > 0.0) || !self.gamma.is_finite() {
            return Err(FfError::Config(format!("invalid FF-SCP parameters {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Branch {
    Normal,
    Reversed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OodScore {
    pub s: f64,
    pub s0: f64,
    pub branch: Branch,
    /// Final score; higher means more out-of-distribution.
    pub score: f64,
    pub argmin_class: usize,
}

fn check_latents(latents: &[Vec<f64>], store: &LatentStore) -> Result<()> {
    if latents.len() != store.class_count() {
        return Err(FfError::State(format!(
            "{} label latents for a {}-class store",
            latents.len(),
            store.class_count()
        )));
    }
    if let Some(l) = latents.iter().find(|l| l.len() != store.dim()) {
        return Err(FfError::State(format!(
            "latent dimension {} does not match store dimension {}",
            l.len(),
            store.dim()
        )));
    }
    Ok(())
}

/// `min_p sum_c d(l_c, L[p][c])^beta` given the per-label latents `l_c`.
/// Returns the minimum and the minimizing class (lowest on ties).
pub fn raw_score_from_latents(latents: &[Vec<f64>], store: &LatentStore, beta: f64) -> Result<(f64, usize)> {
    check_latents(latents, store)?;
    let kind = store.distance_kind();
    let mut best = (f64::INFINITY, 0);
    for p in 0..store.class_count() {
        let mut total = 0.0;
        for (c, l) in latents.iter().enumerate() {
            total += point_set_distance(l, store.set(p, c), kind)?.powf(beta);
        }
        if total < best.0 {
            best = (total, p);
        }
    }
    Ok(best)
}

/// `sum_c d(l_c, 0)^beta`.
pub fn zero_score_from_latents(latents: &[Vec<f64>], store: &LatentStore, beta: f64) -> Result<f64> {
    check_latents(latents, store)?;
    let kind = store.distance_kind();
    Ok(latents.iter().map(|l| kind.to_origin(l).powf(beta)).sum())
}

/// Raw score of an image: `(s, argmin class, per-label latents)`.
pub fn raw_score(
    image: &[f64],
    network: &FfNetwork,
    store: &LatentStore,
    params: &FfScpParams,
    encode_seed: u64,
) -> Result<(f64, usize, Vec<Vec<f64>>)> {
    let latents = network.first_layer_latents(image, encode_seed)?;
    let (s, argmin) = raw_score_from_latents(&latents, store, params.beta)?;
    Ok((s, argmin, latents))
}

pub fn zero_score(
    image: &[f64],
    network: &FfNetwork,
    store: &LatentStore,
    params: &FfScpParams,
    encode_seed: u64,
) -> Result<f64> {
    let latents = network.first_layer_latents(image, encode_seed)?;
    zero_score_from_latents(&latents, store, params.beta)
}

/// Applies the branch: `gamma - s` when reversed, `s` otherwise.
pub fn final_score(s: f64, s0: f64, argmin_class: usize, params: &FfScpParams) -> Result<OodScore> {
    if !s.is_finite() || !s0.is_finite() {
        return Err(FfError::Domain(format!("non-finite scores s={s}, s0={s0}")));
    }
    let threshold = params.zero_scale * s0;
    let reversed = match params.rule {
        BranchRule::Equation => s > threshold,
        BranchRule::Algorithm => s < threshold,
    };
    let (branch, score) = if reversed {
        if params.gamma <= s {
            return Err(FfError::Config(format!(
                "gamma {} does not exceed reversed-branch score {s}",
                params.gamma
            )));
        }
        (Branch::Reversed, params.gamma - s)
    } else {
        (Branch::Normal, s)
    };
    Ok(OodScore {
        s,
        s0,
        branch,
        score,
        argmin_class,
    })
}

/// Scores from precomputed per-label latents.
pub fn score_latents(latents: &[Vec<f64>], store: &LatentStore, params: &FfScpParams) -> Result<OodScore> {
    let (s, argmin) = raw_score_from_latents(latents, store, params.beta)?;
    let s0 = zero_score_from_latents(latents, store, params.beta)?;
    final_score(s, s0, argmin, params)
}

pub fn score_image(
    image: &[f64],
    network: &FfNetwork,
    store: &LatentStore,
    params: &FfScpParams,
    encode_seed: u64,
) -> Result<OodScore> {
    score_latents(&network.first_layer_latents(image, encode_seed)?, store, params)
}

/// Per-label latents of every image, encoded with `FfNetwork::eval_seed(seed, i)`.
pub fn set_latents(network: &FfNetwork, data: &ImageSet, seed: u64) -> Result<Vec<Vec<Vec<f64>>>> {
    (0..data.len())
        .into_par_iter()
        .map(|i| network.first_layer_latents(&data.flat(i), FfNetwork::eval_seed(seed, i)))
        .collect()
}

pub fn score_set(
    network: &FfNetwork,
    store: &LatentStore,
    data: &ImageSet,
    params: &FfScpParams,
    seed: u64,
) -> Result<Vec<OodScore>> {
    params.validate()?;
    set_latents(network, data, seed)?
        .par_iter()
        .map(|l| score_latents(l, store, params))
        .collect()
}

/// True when every reversed-branch score exceeds every normal-branch score.
pub fn branches_separated(scores: &[OodScore]) -> bool {
    let max_normal = scores
        .iter()
        .filter(|s| s.branch == Branch::Normal)
        .map(|s| s.score)
        .fold(f64::NEG_INFINITY, f64::max);
    scores
        .iter()
        .filter(|s| s.branch == Branch::Reversed)
        .all(|s| s.score > max_normal)
}

/// Scores precomputed ID and OoD latents and computes the metrics, OoD
/// being the positive class.
pub fn evaluate_latents(
    id: &[Vec<Vec<f64>>],
    ood: &[Vec<Vec<f64>>],
    store: &LatentStore,
    params: &FfScpParams,
) -> Result<(Vec<OodScore>, Vec<OodScore>, MetricsRow)> {
    params.validate()?;
    let score = |set: &[Vec<Vec<f64>>]| -> Result<Vec<OodScore>> {
        set.par_iter().map(|l| score_latents(l, store, params)).collect()
    };
    let (id_scores, ood_scores) = (score(id)?, score(ood)?);
    let table = ScoreTable::new(
        id_scores.iter().map(|s| s.score).collect(),
        ood_scores.iter().map(|s| s.score).collect(),
    )?;
    Ok((id_scores, ood_scores, MetricsRow::compute(&table)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub params: FfScpParams,
    /// Metrics on the even-indexed samples, used for selection.
    pub select: MetricsRow,
    /// Metrics on the odd-indexed samples.
    pub report: MetricsRow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearch {
    pub rows: Vec<GridRow>,
    /// Index into `rows` of the selected combination.
    pub selected: usize,
    /// Combinations whose gamma does not exceed some reversed-branch score.
    pub skipped: Vec<FfScpParams>,
}

impl GridSearch {
    pub fn best(&self) -> &GridRow {
        &self.rows[self.selected]
    }
}

/// Scores every parameter combination of [`FfScpParams::grid`]. Selection
/// uses the even-indexed samples of both sets: highest AUROC, then lowest
/// FPR95, then grid order.
pub fn grid_search(
    id: &[Vec<Vec<f64>>],
    ood: &[Vec<Vec<f64>>],
    store: &LatentStore,
    rule: BranchRule,
) -> Result<GridSearch> {
    if id.len() < 2 || ood.len() < 2 {
        return Err(FfError::Domain("grid search needs at least two samples per side".into()));
    }
    let half = |v: &[Vec<Vec<f64>>], parity: usize| -> Vec<Vec<Vec<f64>>> {
        v.iter().skip(parity).step_by(2).cloned().collect()
    };
    let (id_sel, id_rep) = (half(id, 0), half(id, 1));
    let (ood_sel, ood_rep) = (half(ood, 0), half(ood, 1));
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for params in FfScpParams::grid(rule) {
        let select = match evaluate_latents(&id_sel, &ood_sel, store, &params) {
            Ok((_, _, m)) => m,
            Err(FfError::Config(_)) => {
                skipped.push(params);
                continue;
            }
            Err(e) => return Err(e),
        };
        let report = match evaluate_latents(&id_rep, &ood_rep, store, &params) {
            Ok((_, _, m)) => m,
            Err(FfError::Config(_)) => {
                skipped.push(params);
                continue;
            }
            Err(e) => return Err(e),
        };
        rows.push(GridRow { params, select, report });
    }
    if rows.is_empty() {
        return Err(FfError::Config("every grid combination has a gamma collision".into()));
    }
    let mut selected = 0;
    for (i, row) in rows.iter().enumerate() {
        let b = &rows[selected].select;
        if row.select.auroc > b.auroc || (row.select.auroc == b.auroc && row.select.fpr95 < b.fpr95) {
            selected = i;
        }
    }
    Ok(GridSearch { rows, selected, skipped })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReversalReport {
    /// `min_c d(0, L[c][c])`.
    pub lhs: f64,
    /// Batch mean of `min_c d(l_c, L[c][c])`.
    pub rhs: f64,
    /// Set when `lhs <= rhs`: near-zero latents would score as more
    /// in-distribution than typical ID samples.
    pub flagged: bool,
}

pub fn reversal_diagnostic_from_latents(store: &LatentStore, batch: &[Vec<Vec<f64>>]) -> Result<ReversalReport> {
    if batch.is_empty() {
        return Err(FfError::Domain("reversal diagnostic needs a non-empty batch".into()));
    }
    let kind = store.distance_kind();
    let zero = vec![0.0; store.dim()];
    let mut lhs = f64::INFINITY;
    for c in 0..store.class_count() {
        lhs = lhs.min(point_set_distance(&zero, store.set(c, c), kind)?);
    }
    let mut total = 0.0;
    for latents in batch {
        check_latents(latents, store)?;
        let mut best = f64::INFINITY;
        for (c, l) in latents.iter().enumerate() {
            best = best.min(point_set_distance(l, store.set(c, c), kind)?);
        }
        total += best;
    }
    let rhs = total / batch.len() as f64;
    Ok(ReversalReport {
        lhs,
        rhs,
        flagged: lhs <= rhs,
    })
}

pub fn reversal_diagnostic(network: &FfNetwork, store: &LatentStore, batch: &ImageSet, seed: u64) -> Result<ReversalReport> {
    reversal_diagnostic_from_latents(store, &set_latents(network, batch, seed)?)
}
