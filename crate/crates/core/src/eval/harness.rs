use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{relative_delta, ImpressionMetrics};
use super::EvalError;
use crate::corpus::Impression;
use crate::scoring::{load_embeddings, score_impression, ColdPolicy, EmbeddingTable, DEFAULT_MAX_HISTORY};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub max_history: usize,
    pub cold_policy: ColdPolicy,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            max_history: DEFAULT_MAX_HISTORY,
            cold_policy: ColdPolicy::Zero,
        }
    }
}

/// The four reported metrics, one value of `T` each.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSet<T> {
    pub auc: T,
    pub mrr: T,
    #[serde(rename = "ndcg@5")]
    pub ndcg5: T,
    #[serde(rename = "ndcg@10")]
    pub ndcg10: T,
}

impl<T> MetricSet<T> {
    pub const NAMES: [&'static str; 4] = ["auc", "mrr", "ndcg@5", "ndcg@10"];

    pub fn map<U>(&self, mut f: impl FnMut(&T) -> U) -> MetricSet<U> {
        MetricSet {
            auc: f(&self.auc),
            mrr: f(&self.mrr),
            ndcg5: f(&self.ndcg5),
            ndcg10: f(&self.ndcg10),
        }
    }

    pub fn zip<U, V>(&self, other: &MetricSet<U>, mut f: impl FnMut(&T, &U) -> V) -> MetricSet<V> {
        MetricSet {
            auc: f(&self.auc, &other.auc),
            mrr: f(&self.mrr, &other.mrr),
            ndcg5: f(&self.ndcg5, &other.ndcg5),
            ndcg10: f(&self.ndcg10, &other.ndcg10),
        }
    }

    pub fn named(&self) -> [(&'static str, &T); 4] {
        [
            (Self::NAMES[0], &self.auc),
            (Self::NAMES[1], &self.mrr),
            (Self::NAMES[2], &self.ndcg5),
            (Self::NAMES[3], &self.ndcg10),
        ]
    }
}

/// Mean and population standard deviation over the impressions where the
/// metric is defined.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub count: usize,
}

impl MetricSummary {
    fn from_values(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self {
                mean: None,
                std: None,
                count: 0,
            };
        }
        let n = values.len() as f64;
        let mut sum = 0.0;
        for v in values {
            sum += v;
        }
        let mean = sum / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Self {
            mean: Some(mean),
            std: Some(var.sqrt()),
            count: values.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanguageResult {
    pub metrics: MetricSet<MetricSummary>,
    pub impressions: usize,
    pub cold_count: usize,
    pub auc_skipped_count: usize,
}

impl LanguageResult {
    pub fn from_impressions(per_impression: &[(ImpressionMetrics, bool)]) -> Self {
        let collect = |f: &dyn Fn(&ImpressionMetrics) -> Option<f64>| {
            let values: Vec<f64> = per_impression.iter().filter_map(|(m, _)| f(m)).collect();
            MetricSummary::from_values(&values)
        };
        Self {
            metrics: MetricSet {
                auc: collect(&|m| m.auc),
                mrr: collect(&|m| Some(m.mrr)),
                ndcg5: collect(&|m| Some(m.ndcg5)),
                ndcg10: collect(&|m| Some(m.ndcg10)),
            },
            impressions: per_impression.len(),
            cold_count: per_impression.iter().filter(|(_, cold)| *cold).count(),
            auc_skipped_count: per_impression.iter().filter(|(m, _)| m.skipped_auc).count(),
        }
    }

    pub fn means(&self) -> MetricSet<Option<f64>> {
        self.metrics.map(|s| s.mean)
    }
}

/// Cross-lingual evaluation report. Metric values are fractions in [0, 1];
/// `delta_percent` is already in percent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub source_language: String,
    pub target_languages: Vec<String>,
    pub per_language: BTreeMap<String, LanguageResult>,
    pub eng: MetricSet<Option<f64>>,
    /// Unweighted mean over target languages; absent without targets.
    pub avg: Option<MetricSet<Option<f64>>>,
    pub delta_percent: Option<MetricSet<Option<f64>>>,
    pub cold_count: usize,
    pub auc_skipped_count: usize,
}

impl EvalReport {
    pub fn write_json<W: Write>(&self, mut sink: W) -> Result<(), EvalError> {
        serde_json::to_writer_pretty(&mut sink, self).map_err(|e| EvalError::Io(e.into()))?;
        sink.write_all(b"\n")?;
        Ok(())
    }

    /// Flat `language,metric,mean,count` rows; `AVG` and `DELTA%` rows follow
    /// the per-language ones.
    pub fn write_csv<W: Write>(&self, mut sink: W) -> Result<(), EvalError> {
        let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        writeln!(sink, "language,metric,mean,count")?;
        for (lang, res) in &self.per_language {
            for (name, s) in res.metrics.named() {
                writeln!(sink, "{lang},{name},{},{}", fmt(s.mean), s.count)?;
            }
        }
        if let Some(avg) = &self.avg {
            for (name, v) in avg.named() {
                writeln!(sink, "AVG,{name},{},{}", fmt(*v), self.target_languages.len())?;
            }
        }
        if let Some(delta) = &self.delta_percent {
            for (name, v) in delta.named() {
                writeln!(sink, "DELTA%,{name},{},", fmt(*v))?;
            }
        }
        sink.flush()?;
        Ok(())
    }
}

/// News ids a table lacks, per language.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CoverageGap {
    pub language: String,
    pub missing: Vec<String>,
}

/// Every news id referenced by the behaviors that some table lacks.
pub fn coverage_gaps(behaviors: &[Impression], tables: &BTreeMap<String, EmbeddingTable>) -> Vec<CoverageGap> {
    let ids: BTreeSet<&str> = behaviors.iter().flat_map(|imp| imp.news_ids()).collect();
    tables
        .iter()
        .filter_map(|(lang, table)| {
            let missing: Vec<String> = ids
                .iter()
                .filter(|id| !table.contains(id))
                .map(|s| s.to_string())
                .collect();
            (!missing.is_empty()).then(|| CoverageGap {
                language: lang.clone(),
                missing,
            })
        })
        .collect()
}

/// Scores and measures every impression with one table, in impression order.
pub fn evaluate_impressions(
    behaviors: &[Impression],
    table: &EmbeddingTable,
    options: &EvalOptions,
) -> Result<Vec<(ImpressionMetrics, bool)>, EvalError> {
    behaviors
        .par_iter()
        .map(|imp| {
            let scored = score_impression(imp, table, options.max_history, options.cold_policy)?;
            let metrics = ImpressionMetrics::compute(&imp.labels(), &scored.scores())
                .map_err(|e| EvalError::Impression(imp.impression_id.clone(), Box::new(e)))?;
            Ok((metrics, scored.cold))
        })
        .collect()
}

fn mean_of(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for v in values {
        sum += v?;
        n += 1;
    }
    (n > 0).then(|| sum / n as f64)
}

/// Zero-shot cross-lingual evaluation: the same behavior log is scored once
/// per language table; AVG and %Δ compare the targets with the source.
pub fn run_xlt_eval(
    behaviors: &[Impression],
    tables: &BTreeMap<String, EmbeddingTable>,
    source_language: &str,
    options: &EvalOptions,
) -> Result<EvalReport, EvalError> {
    if behaviors.is_empty() {
        return Err(EvalError::EmptyBehaviors);
    }
    if !tables.contains_key(source_language) {
        return Err(EvalError::UnknownLanguage(source_language.to_string()));
    }
    let gaps = coverage_gaps(behaviors, tables);
    if !gaps.is_empty() {
        return Err(EvalError::Coverage(gaps));
    }

    let mut per_language = BTreeMap::new();
    for (lang, table) in tables {
        let per_impression = evaluate_impressions(behaviors, table, options)?;
        per_language.insert(lang.clone(), LanguageResult::from_impressions(&per_impression));
    }

    let source = &per_language[source_language];
    let eng = source.means();
    let targets: Vec<String> = tables.keys().filter(|l| *l != source_language).cloned().collect();
    let avg = (!targets.is_empty()).then(|| MetricSet {
        auc: mean_of(targets.iter().map(|l| per_language[l].metrics.auc.mean)),
        mrr: mean_of(targets.iter().map(|l| per_language[l].metrics.mrr.mean)),
        ndcg5: mean_of(targets.iter().map(|l| per_language[l].metrics.ndcg5.mean)),
        ndcg10: mean_of(targets.iter().map(|l| per_language[l].metrics.ndcg10.mean)),
    });
    let delta_percent = avg.as_ref().map(|avg| {
        eng.zip(avg, |e, a| match (e, a) {
            (Some(e), Some(a)) => relative_delta(*e, *a).ok(),
            _ => None,
        })
    });

    Ok(EvalReport {
        source_language: source_language.to_string(),
        target_languages: targets,
        cold_count: source.cold_count,
        auc_skipped_count: source.auc_skipped_count,
        per_language,
        eng,
        avg,
        delta_percent,
    })
}

/// Per-language embedding tables produced by one encoder checkpoint.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub id: String,
    pub tables: BTreeMap<String, EmbeddingTable>,
}

impl Checkpoint {
    /// Loads `<lang>.nbem`, `<lang>.bin` or `<lang>.tsv` files from a
    /// directory; the file stem is the language tag. With `languages`, only
    /// those tags are loaded and each must exist.
    pub fn load_dir(dir: &Path, languages: Option<&[String]>) -> Result<Self, EvalError> {
        let id = dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| dir.display().to_string());
        let mut files: BTreeMap<String, std::path::PathBuf> = BTreeMap::new();
        for entry in std::fs::read_dir(dir)? {
            let path = entry?.path();
            let ext = path.extension().and_then(|e| e.to_str());
            if !matches!(ext, Some("nbem" | "bin" | "tsv")) {
                continue;
            }
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                if files.insert(stem.to_string(), path.clone()).is_some() {
                    return Err(EvalError::Checkpoint {
                        id,
                        source: Box::new(EvalError::Config(format!("two embedding files for language {stem}"))),
                    });
                }
            }
        }
        let wanted: Vec<String> = match languages {
            Some(langs) => langs.to_vec(),
            None => files.keys().cloned().collect(),
        };
        let mut tables = BTreeMap::new();
        for lang in wanted {
            let path = files.get(&lang).ok_or_else(|| EvalError::Checkpoint {
                id: id.clone(),
                source: Box::new(EvalError::UnknownLanguage(lang.clone())),
            })?;
            let table = load_embeddings(path).map_err(|e| EvalError::Checkpoint {
                id: id.clone(),
                source: Box::new(e.into()),
            })?;
            tables.insert(lang, table);
        }
        Ok(Self { id, tables })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckpointSelection {
    pub best: String,
    /// Mean nDCG@10 over all evaluated languages, per checkpoint in input order.
    pub scores: Vec<(String, f64)>,
}

/// Mean nDCG@10 across every language in the report, source included.
pub fn selection_score(report: &EvalReport) -> f64 {
    mean_of(report.per_language.values().map(|r| r.metrics.ndcg10.mean)).unwrap_or(f64::NAN)
}

/// Picks the checkpoint with the highest mean nDCG@10; ties go to the
/// earliest. Checkpoints are consumed lazily so only one is held at a time.
pub fn checkpoint_select<I>(
    checkpoints: I,
    behaviors: &[Impression],
    source_language: &str,
    options: &EvalOptions,
) -> Result<CheckpointSelection, EvalError>
where
    I: IntoIterator<Item = Result<Checkpoint, EvalError>>,
{
    let mut scores = Vec::new();
    let mut best: Option<(usize, f64)> = None;
    for ckpt in checkpoints {
        let ckpt = ckpt?;
        let report = run_xlt_eval(behaviors, &ckpt.tables, source_language, options).map_err(|e| match e {
            EvalError::Checkpoint { .. } => e,
            other => EvalError::Checkpoint {
                id: ckpt.id.clone(),
                source: Box::new(other),
            },
        })?;
        let score = selection_score(&report);
        log::info!("checkpoint {}: mean nDCG@10 {score:.6}", ckpt.id);
        if best.is_none_or(|(_, b)| score > b) {
            best = Some((scores.len(), score));
        }
        scores.push((ckpt.id, score));
    }
    let (idx, _) = best.ok_or(EvalError::NoCheckpoints)?;
    Ok(CheckpointSelection {
        best: scores[idx].0.clone(),
        scores,
    })
}

/// Distinct news ids referenced by the behaviors (history and candidates).
pub fn referenced_ids(behaviors: &[Impression]) -> HashSet<&str> {
    behaviors.iter().flat_map(|imp| imp.news_ids()).collect()
}
