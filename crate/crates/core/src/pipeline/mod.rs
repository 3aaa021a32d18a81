//! Corpus compilation: exact dedup, script filtering, language-ID filtering,
//! per-source K%-shortest removal and MinHash near-dedup.
//!
//! Language keys are independent shards and are processed in parallel. The
//! output keeps the input order and does not depend on the worker count.

mod filters;
mod minhash;

use std::collections::{BTreeMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, LanguageKey, NewsText, PairKey, ParallelPair};

pub use filters::{
    exact_dedup, length_filter, length_filter_removals, lid_filter, matches_script, script_filter,
    script_letter_counts, LidLabels,
};
pub use minhash::{
    near_dedup_keep, near_duplicate_roots, shingles, MinHashError, MinHashSignature, MinHasher, MERSENNE_61,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid pipeline config: {0}")]
    Config(String),
    #[error(transparent)]
    MinHash(#[from] MinHashError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// K for the K%-shortest filter, per source.
    pub k_percent: BTreeMap<String, f64>,
    /// K for sources missing from `k_percent`.
    pub default_k_percent: f64,
    pub minhash_permutations: usize,
    pub shingle_n: usize,
    pub near_dup_threshold: f64,
    pub lsh_bands: usize,
    pub lsh_rows: usize,
    pub min_letters: usize,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            k_percent: BTreeMap::from([("wikinews".to_string(), 15.0)]),
            default_k_percent: 3.0,
            minhash_permutations: 256,
            shingle_n: 5,
            near_dup_threshold: 0.9,
            lsh_bands: 16,
            lsh_rows: 16,
            min_letters: 1,
            seed: 0x5eed,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let fail = |m: String| Err(PipelineError::Config(m));
        if self.minhash_permutations == 0 {
            return fail("minhash_permutations must be positive".into());
        }
        if self.lsh_bands * self.lsh_rows != self.minhash_permutations {
            return fail(format!(
                "lsh_bands ({}) x lsh_rows ({}) must equal minhash_permutations ({})",
                self.lsh_bands, self.lsh_rows, self.minhash_permutations
            ));
        }
        if !(0.0..=1.0).contains(&self.near_dup_threshold) {
            return fail(format!("near_dup_threshold {} outside [0, 1]", self.near_dup_threshold));
        }
        if self.shingle_n == 0 {
            return fail("shingle_n must be positive".into());
        }
        for (source, k) in self
            .k_percent
            .iter()
            .map(|(s, k)| (s.as_str(), *k))
            .chain([("<default>", self.default_k_percent)])
        {
            if !(0.0..100.0).contains(&k) {
                return fail(format!("K for {source} must be in [0, 100), got {k}"));
            }
        }
        Ok(())
    }

    pub fn k_for(&self, source: &str) -> f64 {
        self.k_percent.get(source).copied().unwrap_or(self.default_k_percent)
    }
}

/// Item counts at one stage, overall and broken down by key and by source.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageCounts {
    pub total: usize,
    pub by_key: BTreeMap<String, usize>,
    pub by_source: BTreeMap<String, usize>,
}

impl StageCounts {
    fn add<'a>(&mut self, items: impl IntoIterator<Item = &'a NewsText>) {
        for item in items {
            self.total += 1;
            *self.by_key.entry(item.key().to_string()).or_insert(0) += 1;
            *self.by_source.entry(item.source().to_string()).or_insert(0) += 1;
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LidWarnings {
    /// No label file was supplied; the stage passed everything through.
    pub labels_missing: bool,
    /// Labels whose id does not occur in the corpus.
    pub unknown_label_ids: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineStats {
    pub input: StageCounts,
    pub after_exact_dedup: StageCounts,
    pub after_script_filter: StageCounts,
    pub after_lid_filter: StageCounts,
    pub after_length_filter: StageCounts,
    pub after_near_dedup: StageCounts,
    pub lid: LidWarnings,
}

impl PipelineStats {
    pub fn stages(&self) -> [(&'static str, &StageCounts); 6] {
        [
            ("input", &self.input),
            ("after_exact_dedup", &self.after_exact_dedup),
            ("after_script_filter", &self.after_script_filter),
            ("after_lid_filter", &self.after_lid_filter),
            ("after_length_filter", &self.after_length_filter),
            ("after_near_dedup", &self.after_near_dedup),
        ]
    }
}

/// MinHash near-dedup over one shard; keeps the earliest item of each group.
pub fn near_dedup<'a>(
    items: &[&'a NewsText],
    hasher: &MinHasher,
    config: &PipelineConfig,
) -> Result<Vec<&'a NewsText>, PipelineError> {
    let texts: Vec<&str> = items.iter().map(|t| t.text()).collect();
    let keep = near_dedup_keep(&texts, hasher, config)?;
    Ok(keep.into_iter().map(|i| items[i]).collect())
}

struct ShardResult<'a> {
    stages: [Vec<&'a NewsText>; 6],
}

fn run_shard<'a>(
    key: &LanguageKey,
    items: Vec<&'a NewsText>,
    config: &PipelineConfig,
    hasher: &MinHasher,
    labels: Option<&LidLabels>,
) -> Result<ShardResult<'a>, PipelineError> {
    let deduped = exact_dedup(&items);
    let scripted = script_filter(&deduped, key, config.min_letters);
    let lid = lid_filter(&scripted, key, labels);

    let mut by_source: BTreeMap<&str, Vec<&NewsText>> = BTreeMap::new();
    for item in &lid {
        by_source.entry(item.source()).or_default().push(item);
    }
    let mut kept_ids: HashSet<&str> = HashSet::new();
    for (source, group) in &by_source {
        kept_ids.extend(length_filter(group, config.k_for(source)).iter().map(|t| t.id()));
    }
    let lengthed: Vec<&NewsText> = lid.iter().copied().filter(|t| kept_ids.contains(t.id())).collect();

    let near = near_dedup(&lengthed, hasher, config)?;
    Ok(ShardResult {
        stages: [items, deduped, scripted, lid, lengthed, near],
    })
}

/// Runs every stage per language key, in order: exact dedup, script filter,
/// LID filter, length filter (per source), near dedup.
pub fn run_pipeline(
    corpus: &Corpus,
    config: &PipelineConfig,
    labels: Option<&LidLabels>,
) -> Result<(Corpus, PipelineStats), PipelineError> {
    config.validate()?;
    let hasher = MinHasher::from_config(config);
    let shards: Vec<(LanguageKey, Vec<&NewsText>)> = corpus
        .indices_by_key()
        .into_iter()
        .map(|(key, idx)| (key, idx.into_iter().map(|i| &corpus.items()[i]).collect()))
        .collect();

    let results = shards
        .into_par_iter()
        .map(|(key, items)| run_shard(&key, items, config, &hasher, labels))
        .collect::<Result<Vec<_>, _>>()?;

    let mut stats = PipelineStats::default();
    let mut kept: HashSet<&str> = HashSet::new();
    for shard in &results {
        let [input, exact, script, lid, length, near] = &shard.stages;
        stats.input.add(input.iter().copied());
        stats.after_exact_dedup.add(exact.iter().copied());
        stats.after_script_filter.add(script.iter().copied());
        stats.after_lid_filter.add(lid.iter().copied());
        stats.after_length_filter.add(length.iter().copied());
        stats.after_near_dedup.add(near.iter().copied());
        kept.extend(near.iter().map(|t| t.id()));
    }
    match labels {
        None => {
            if !corpus.is_empty() {
                log::warn!("no language-ID labels supplied; LID filter passes everything through");
            }
            stats.lid.labels_missing = true;
        }
        Some(labels) => {
            let ids: HashSet<&str> = corpus.items().iter().map(|t| t.id()).collect();
            stats.lid.unknown_label_ids = labels.ids().filter(|id| !ids.contains(id)).count();
            if stats.lid.unknown_label_ids > 0 {
                log::warn!("{} LID labels refer to unknown ids", stats.lid.unknown_label_ids);
            }
        }
    }

    let items = corpus
        .items()
        .iter()
        .filter(|t| kept.contains(t.id()))
        .cloned()
        .collect();
    Ok((Corpus::from_unique(items), stats))
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParallelStats {
    pub input: BTreeMap<String, usize>,
    pub after_exact_dedup: BTreeMap<String, usize>,
    pub after_near_dedup: BTreeMap<String, usize>,
}

fn pair_tag(key: &PairKey) -> String {
    format!("{}-{}", key.0, key.1)
}

/// Deduplicates a parallel corpus on its source side, per language pair.
pub fn run_parallel_pipeline(
    pairs: &[ParallelPair],
    config: &PipelineConfig,
) -> Result<(Vec<ParallelPair>, ParallelStats), PipelineError> {
    config.validate()?;
    let hasher = MinHasher::from_config(config);
    let mut groups: BTreeMap<PairKey, Vec<usize>> = BTreeMap::new();
    for (i, p) in pairs.iter().enumerate() {
        groups.entry(p.pair_key()).or_default().push(i);
    }
    let groups: Vec<(PairKey, Vec<usize>)> = groups.into_iter().collect();

    let results = groups
        .par_iter()
        .map(|(_, idx)| {
            let mut seen = HashSet::new();
            let exact: Vec<usize> = idx
                .iter()
                .copied()
                .filter(|&i| seen.insert(pairs[i].src().text()))
                .collect();
            let texts: Vec<&str> = exact.iter().map(|&i| pairs[i].src().text()).collect();
            let near: Vec<usize> = near_dedup_keep(&texts, &hasher, config)?
                .into_iter()
                .map(|j| exact[j])
                .collect();
            Ok::<_, PipelineError>((exact.len(), near))
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut stats = ParallelStats::default();
    let mut keep = vec![false; pairs.len()];
    for ((key, idx), (exact_len, near)) in groups.iter().zip(results) {
        let tag = pair_tag(key);
        stats.input.insert(tag.clone(), idx.len());
        stats.after_exact_dedup.insert(tag.clone(), exact_len);
        stats.after_near_dedup.insert(tag, near.len());
        for i in near {
            keep[i] = true;
        }
    }
    let out = pairs
        .iter()
        .zip(keep)
        .filter(|(_, k)| *k)
        .map(|(p, _)| p.clone())
        .collect();
    Ok((out, stats))
}
