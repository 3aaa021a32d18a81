//! Ranking metrics, the cross-lingual evaluation harness, checkpoint
//! selection, day-based splits and few-shot impression export.

mod harness;
mod metrics;

use std::collections::BTreeSet;
use std::io::Write;

use rand::seq::{index, IndexedRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::corpus::Impression;
use crate::scoring::ScoringError;

pub use harness::{
    checkpoint_select, coverage_gaps, evaluate_impressions, referenced_ids, run_xlt_eval, selection_score, Checkpoint,
    CheckpointSelection, CoverageGap, EvalOptions, EvalReport, LanguageResult, MetricSet, MetricSummary,
};
pub use metrics::{auc, mrr, ndcg_at_k, relative_delta, round2, ImpressionMetrics};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("labels ({labels}) and scores ({scores}) differ in length")]
    LengthMismatch { labels: usize, scores: usize },
    #[error("impression has no candidates")]
    EmptyImpression,
    #[error("label {0} is not binary")]
    InvalidLabel(u8),
    #[error("impression has no positive candidate")]
    NoPositive,
    #[error("k must be at least 1")]
    InvalidK,
    #[error("baseline value is zero; relative difference undefined")]
    ZeroBaseline,
    #[error("no behaviors to evaluate")]
    EmptyBehaviors,
    #[error("language {0:?} has no embedding table")]
    UnknownLanguage(String),
    #[error("embedding coverage gaps: {}", format_gaps(.0))]
    Coverage(Vec<CoverageGap>),
    #[error("impression {0}: {1}")]
    Impression(String, Box<EvalError>),
    #[error("checkpoint {id}: {source}")]
    Checkpoint { id: String, source: Box<EvalError> },
    #[error("no checkpoints given")]
    NoCheckpoints,
    #[error("behaviors span a single day; cannot split")]
    SingleDay,
    #[error("requested {requested} impressions from a population of {population}")]
    NotEnough { requested: usize, population: usize },
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Scoring(#[from] ScoringError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl EvalError {
    /// True for missing-embedding failures, at any nesting depth.
    pub fn is_coverage(&self) -> bool {
        match self {
            EvalError::Coverage(_) | EvalError::Scoring(ScoringError::MissingId(_)) => true,
            EvalError::Checkpoint { source, .. } | EvalError::Impression(_, source) => source.is_coverage(),
            _ => false,
        }
    }
}

fn format_gaps(gaps: &[CoverageGap]) -> String {
    gaps.iter()
        .map(|g| {
            let shown: Vec<&str> = g.missing.iter().take(10).map(String::as_str).collect();
            let more = g.missing.len().saturating_sub(shown.len());
            let tail = if more > 0 {
                format!(" (+{more} more)")
            } else {
                String::new()
            };
            format!(
                "{}: {} missing [{}]{tail}",
                g.language,
                g.missing.len(),
                shown.join(", ")
            )
        })
        .collect::<Vec<_>>()
        .join("; ")
}

/// Splits behaviors into (train, validation): validation is the latest
/// calendar day (UTC), train everything before. Input order is kept.
pub fn split_by_day(impressions: &[Impression]) -> Result<(Vec<Impression>, Vec<Impression>), EvalError> {
    let days: BTreeSet<_> = impressions.iter().map(|i| i.timestamp.date_naive()).collect();
    let last = match days.last() {
        Some(&d) if days.len() >= 2 => d,
        Some(_) => return Err(EvalError::SingleDay),
        None => return Err(EvalError::EmptyBehaviors),
    };
    Ok(impressions
        .iter()
        .cloned()
        .partition(|i| i.timestamp.date_naive() != last))
}

/// A per-positive training tuple for external recommenders.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TrainingSample {
    pub impression_id: String,
    pub user_id: String,
    pub history: Vec<String>,
    pub positive: String,
    pub negatives: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FewShotExport {
    pub impressions: Vec<Impression>,
    pub samples: Option<Vec<TrainingSample>>,
}

/// Negatives drawn per positive when exporting training tuples.
pub const DEFAULT_NEGATIVES_PER_POSITIVE: usize = 4;

/// Uniformly samples exactly `n` impressions (input order preserved) and,
/// with `negatives_per_positive`, one training tuple per clicked candidate
/// with up to that many negatives from the same impression.
pub fn fewshot_export(
    train: &[Impression],
    n: usize,
    seed: u64,
    negatives_per_positive: Option<usize>,
) -> Result<FewShotExport, EvalError> {
    if n > train.len() {
        return Err(EvalError::NotEnough {
            requested: n,
            population: train.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = index::sample(&mut rng, train.len(), n).into_vec();
    picked.sort_unstable();
    let impressions: Vec<Impression> = picked.iter().map(|&i| train[i].clone()).collect();

    let samples = negatives_per_positive.map(|k| {
        let mut out = Vec::new();
        for imp in &impressions {
            let negatives: Vec<&str> = imp
                .candidates
                .iter()
                .filter(|c| !c.clicked)
                .map(|c| c.news_id.as_str())
                .collect();
            for pos in imp.candidates.iter().filter(|c| c.clicked) {
                let chosen: Vec<String> = negatives
                    .choose_multiple(&mut rng, k.min(negatives.len()))
                    .map(|s| s.to_string())
                    .collect();
                out.push(TrainingSample {
                    impression_id: imp.impression_id.clone(),
                    user_id: imp.user_id.clone(),
                    history: imp.history.clone(),
                    positive: pos.news_id.clone(),
                    negatives: chosen,
                });
            }
        }
        out
    });
    Ok(FewShotExport { impressions, samples })
}

/// One JSON object per training tuple.
pub fn write_training_samples<W: Write>(samples: &[TrainingSample], mut sink: W) -> Result<u64, EvalError> {
    let mut written = 0u64;
    for s in samples {
        let mut line = serde_json::to_vec(s).expect("training sample serializes");
        line.push(b'\n');
        sink.write_all(&line)?;
        written += line.len() as u64;
    }
    sink.flush()?;
    Ok(written)
}
