use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::scoring::ranks_descending;

fn check(labels: &[u8], scores: &[f64]) -> Result<(), EvalError> {
    if labels.len() != scores.len() {
        return Err(EvalError::LengthMismatch {
            labels: labels.len(),
            scores: scores.len(),
        });
    }
    if labels.is_empty() {
        return Err(EvalError::EmptyImpression);
    }
    if let Some(&bad) = labels.iter().find(|&&l| l > 1) {
        return Err(EvalError::InvalidLabel(bad));
    }
    Ok(())
}

fn positives(labels: &[u8]) -> usize {
    labels.iter().filter(|&&l| l == 1).count()
}

/// Area under the ROC curve via the Mann-Whitney statistic with averaged
/// tie ranks. `None` when the impression has no positive or no negative.
pub fn auc(labels: &[u8], scores: &[f64]) -> Result<Option<f64>, EvalError> {
    check(labels, scores)?;
    let n_pos = positives(labels);
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Ok(None);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap_or(std::cmp::Ordering::Equal));
    let mut rank_sum_pos = 0.0f64;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        // Ranks start..end (0-based) share the average 1-based rank.
        let avg_rank = (start + 1 + end) as f64 / 2.0;
        let pos_in_run = order[start..end].iter().filter(|&&i| labels[i] == 1).count();
        rank_sum_pos += avg_rank * pos_in_run as f64;
        start = end;
    }
    let p = n_pos as f64;
    let u = rank_sum_pos - p * (p + 1.0) / 2.0;
    Ok(Some(u / (p * n_neg as f64)))
}

/// Mean reciprocal rank over all positives (stable ties by input order).
pub fn mrr(labels: &[u8], scores: &[f64]) -> Result<f64, EvalError> {
    check(labels, scores)?;
    let n_pos = positives(labels);
    if n_pos == 0 {
        return Err(EvalError::NoPositive);
    }
    let ranks = ranks_descending(scores);
    let sum: f64 = labels
        .iter()
        .zip(&ranks)
        .filter(|(&l, _)| l == 1)
        .map(|(_, &r)| 1.0 / r as f64)
        .sum();
    Ok(sum / n_pos as f64)
}

/// Binary-relevance nDCG over the top `k` of the score-descending order.
pub fn ndcg_at_k(labels: &[u8], scores: &[f64], k: usize) -> Result<f64, EvalError> {
    check(labels, scores)?;
    if k == 0 {
        return Err(EvalError::InvalidK);
    }
    let n_pos = positives(labels);
    if n_pos == 0 {
        return Err(EvalError::NoPositive);
    }
    let ranks = ranks_descending(scores);
    let dcg: f64 = labels
        .iter()
        .zip(&ranks)
        .filter(|(&l, &r)| l == 1 && r <= k)
        .map(|(_, &r)| 1.0 / ((r + 1) as f64).log2())
        .sum();
    let idcg: f64 = (1..=n_pos.min(k)).map(|i| 1.0 / ((i + 1) as f64).log2()).sum();
    Ok(dcg / idcg)
}

/// Per-impression metric values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImpressionMetrics {
    pub auc: Option<f64>,
    pub mrr: f64,
    pub ndcg5: f64,
    pub ndcg10: f64,
    pub skipped_auc: bool,
}

impl ImpressionMetrics {
    pub fn compute(labels: &[u8], scores: &[f64]) -> Result<Self, EvalError> {
        let auc = auc(labels, scores)?;
        Ok(Self {
            auc,
            mrr: mrr(labels, scores)?,
            ndcg5: ndcg_at_k(labels, scores, 5)?,
            ndcg10: ndcg_at_k(labels, scores, 10)?,
            skipped_auc: auc.is_none(),
        })
    }
}

/// `100 * (avg - eng) / eng`, rounded half away from zero to two decimals.
pub fn relative_delta(eng_value: f64, avg_value: f64) -> Result<f64, EvalError> {
    if eng_value == 0.0 {
        return Err(EvalError::ZeroBaseline);
    }
    Ok(round2(100.0 * (avg_value - eng_value) / eng_value))
}

/// Half-away-from-zero rounding to two decimals.
pub fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}
