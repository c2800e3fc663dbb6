//! Threshold-free separation metrics. Out-of-distribution samples are the
//! positive class and higher scores mean "more out-of-distribution".

use serde::{Deserialize, Serialize};

use crate::error::{FfError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    id_scores: Vec<f64>,
    ood_scores: Vec<f64>,
}

impl ScoreTable {
    pub fn new(id_scores: Vec<f64>, ood_scores: Vec<f64>) -> Result<Self> {
        if id_scores.is_empty() || ood_scores.is_empty() {
            return Err(FfError::Domain("score table needs ID and OoD scores".into()));
        }
        if id_scores.iter().chain(&ood_scores).any(|s| !s.is_finite()) {
            return Err(FfError::Domain("non-finite score".into()));
        }
        Ok(ScoreTable { id_scores, ood_scores })
    }

    pub fn id_scores(&self) -> &[f64] {
        &self.id_scores
    }

    pub fn ood_scores(&self) -> &[f64] {
        &self.ood_scores
    }

    pub fn swapped(&self) -> ScoreTable {
        ScoreTable {
            id_scores: self.ood_scores.clone(),
            ood_scores: self.id_scores.clone(),
        }
    }

    /// `(true positives, false positives)` at each distinct threshold, from
    /// the highest score down; a sample is positive when `score >= threshold`.
    fn operating_points(&self) -> Vec<(usize, usize)> {
        let mut all: Vec<(f64, bool)> = self
            .id_scores
            .iter()
            .map(|&s| (s, false))
            .chain(self.ood_scores.iter().map(|&s| (s, true)))
            .collect();
        all.sort_by(|a, b| b.0.total_cmp(&a.0));
        let mut points = Vec::new();
        let (mut tp, mut fp) = (0, 0);
        for (i, &(score, ood)) in all.iter().enumerate() {
            if ood {
                tp += 1;
            } else {
                fp += 1;
            }
            if all.get(i + 1).map_or(true, |next| next.0 != score) {
                points.push((tp, fp));
            }
        }
        points
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub auroc: f64,
    pub aupr: f64,
    pub fpr95: f64,
}

impl MetricsRow {
    pub fn compute(table: &ScoreTable) -> Self {
        MetricsRow {
            auroc: auroc(table),
            aupr: aupr(table),
            fpr95: fpr_at_95tpr(table),
        }
    }
}

/// Probability that a random OoD score exceeds a random ID score, ties
/// counting one half. Computed from midranks.
pub fn auroc(table: &ScoreTable) -> f64 {
    let mut all: Vec<(f64, bool)> = table
        .id_scores
        .iter()
        .map(|&s| (s, false))
        .chain(table.ood_scores.iter().map(|&s| (s, true)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j < all.len() && all[j].0 == all[i].0 {
            j += 1;
        }
        // ranks i+1..=j share their mean
        let mid = (i + j + 1) as f64 / 2.0;
        rank_sum += mid * all[i..j].iter().filter(|x| x.1).count() as f64;
        i = j;
    }
    let n_pos = table.ood_scores.len() as f64;
    let n_neg = table.id_scores.len() as f64;
    (rank_sum - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg)
}

/// Average precision: `sum_k (R_k - R_{k-1}) P_k` over distinct thresholds.
pub fn aupr(table: &ScoreTable) -> f64 {
    let positives = table.ood_scores.len() as f64;
    let mut area = 0.0;
    let mut prev_recall = 0.0;
    for (tp, fp) in table.operating_points() {
        let recall = tp as f64 / positives;
        let precision = tp as f64 / (tp + fp) as f64;
        area += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    area
}

/// Smallest false positive rate among thresholds reaching a true positive
/// rate of at least 0.95.
pub fn fpr_at_95tpr(table: &ScoreTable) -> f64 {
    let positives = table.ood_scores.len() as f64;
    let negatives = table.id_scores.len() as f64;
    table
        .operating_points()
        .into_iter()
        .filter(|&(tp, _)| tp as f64 / positives >= 0.95)
        .map(|(_, fp)| fp as f64 / negatives)
        .fold(1.0, f64::min)
}
