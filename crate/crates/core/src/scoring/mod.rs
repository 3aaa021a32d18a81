//! Embedding tables and the training-free late-fusion recommender.
//!
//! A candidate's score for a user is the mean dot product between the
//! candidate embedding and the embeddings of the user's clicked news.

mod remote;
mod table;

use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Impression;

pub use remote::{fetch_remote_embeddings, RemoteEncoder};
pub use table::{load_embeddings, read_embeddings, EmbeddingTable, BINARY_MAGIC, BINARY_VERSION};

/// Most recent clicks considered per user.
pub const DEFAULT_MAX_HISTORY: usize = 50;

#[derive(Debug, Error)]
pub enum ScoringError {
    #[error("embedding {id:?} has {found} components, expected {expected}")]
    DimMismatch { id: String, expected: usize, found: usize },
    #[error("embedding {0:?} contains a non-finite value")]
    NonFinite(String),
    #[error("duplicate embedding id {0:?}")]
    DuplicateId(String),
    #[error("embedding {0:?} is a zero vector")]
    ZeroVector(String),
    #[error("no embedding for news id {0:?}")]
    MissingId(String),
    #[error("cold user: impression {0:?} has an empty click history")]
    ColdUser(String),
    #[error("cold user: empty click history")]
    EmptyHistory,
    #[error("vector dimensions differ: {0} vs {1}")]
    VectorDims(usize, usize),
    #[error("malformed embedding file: {0}")]
    Format(String),
    #[error("remote encoder returned status {0}")]
    Status(u16),
    #[error("remote encoder unreachable after {attempts} attempt(s): {message}")]
    Transport { attempts: usize, message: String },
    #[error("remote encoder: {0}")]
    Remote(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// What to do with impressions whose click history is empty.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColdPolicy {
    #[default]
    Error,
    /// Score every candidate 0.0 and flag the impression.
    Zero,
}

impl FromStr for ColdPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "error" => Ok(ColdPolicy::Error),
            "zero" => Ok(ColdPolicy::Zero),
            other => Err(format!("unknown cold policy {other:?} (expected error or zero)")),
        }
    }
}

pub fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum()
}

/// Mean of `<candidate, h>` over the history, accumulated in f64 in history order.
pub fn user_score(candidate: &[f32], history: &[&[f32]]) -> Result<f64, ScoringError> {
    if history.is_empty() {
        return Err(ScoringError::EmptyHistory);
    }
    let mut sum = 0.0f64;
    for h in history {
        if h.len() != candidate.len() {
            return Err(ScoringError::VectorDims(candidate.len(), h.len()));
        }
        sum += dot(candidate, h);
    }
    Ok(sum / history.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoredCandidate {
    pub news_id: String,
    pub score: f64,
    /// 1-based position after sorting by descending score.
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoredImpression {
    /// In the impression's candidate order.
    pub candidates: Vec<ScoredCandidate>,
    /// History was empty and the zero policy applied.
    pub cold: bool,
}

impl ScoredImpression {
    pub fn scores(&self) -> Vec<f64> {
        self.candidates.iter().map(|c| c.score).collect()
    }
}

/// 1-based ranks by descending score; equal scores keep input order.
pub fn ranks_descending(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap_or(std::cmp::Ordering::Equal));
    let mut ranks = vec![0; scores.len()];
    for (pos, &i) in order.iter().enumerate() {
        ranks[i] = pos + 1;
    }
    ranks
}

fn lookup<'t>(table: &'t EmbeddingTable, id: &str) -> Result<&'t [f32], ScoringError> {
    table.get(id).ok_or_else(|| ScoringError::MissingId(id.to_string()))
}

/// Scores every candidate of an impression against the user's last
/// `max_history` clicks.
pub fn score_impression(
    impression: &Impression,
    table: &EmbeddingTable,
    max_history: usize,
    cold_policy: ColdPolicy,
) -> Result<ScoredImpression, ScoringError> {
    let start = impression.history.len().saturating_sub(max_history);
    let history = impression.history[start..]
        .iter()
        .map(|id| lookup(table, id))
        .collect::<Result<Vec<_>, _>>()?;
    let candidates = impression
        .candidates
        .iter()
        .map(|c| lookup(table, &c.news_id))
        .collect::<Result<Vec<_>, _>>()?;

    let cold = history.is_empty();
    let scores: Vec<f64> = if cold {
        match cold_policy {
            ColdPolicy::Error => return Err(ScoringError::ColdUser(impression.impression_id.clone())),
            ColdPolicy::Zero => vec![0.0; candidates.len()],
        }
    } else {
        candidates
            .iter()
            .map(|c| user_score(c, &history))
            .collect::<Result<_, _>>()?
    };
    let ranks = ranks_descending(&scores);
    Ok(ScoredImpression {
        candidates: impression
            .candidates
            .iter()
            .zip(scores)
            .zip(ranks)
            .map(|((c, score), rank)| ScoredCandidate {
                news_id: c.news_id.clone(),
                score,
                rank,
            })
            .collect(),
        cold,
    })
}
