//! Temperature-smoothed language sampling and seq2seq example generation for
//! denoising (token deletion) and translation objectives.
//!
//! All randomness flows from one ChaCha stream seeded by the configuration,
//! consumed in a fixed order, so a given `(corpora, config)` always yields the
//! same examples.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, CorpusError, ExampleLanguage, NewsText, Objective, PairKey, ParallelPair, Seq2SeqExample};

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error("no eligible languages: every key has fewer than {min_count} texts")]
    NoEligibleLanguages { min_count: usize },
    #[error("cannot corrupt an empty token sequence")]
    EmptyTokens,
    #[error("mode {0} needs a non-empty parallel corpus")]
    MissingParallel(Mode),
    #[error("mode {0} needs a non-empty monolingual corpus")]
    MissingMono(Mode),
    #[error("distribution key {0} does not occur in the corpus")]
    UnknownKey(String),
    #[error("invalid sampler config: {0}")]
    Config(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Dae,
    Mt,
    DaePlusMt,
    DaeThenMt,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Dae => "dae",
            Mode::Mt => "mt",
            Mode::DaePlusMt => "dae_plus_mt",
            Mode::DaeThenMt => "dae_then_mt",
        })
    }
}

impl FromStr for Mode {
    type Err = SamplerError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "dae" => Ok(Mode::Dae),
            "mt" => Ok(Mode::Mt),
            "dae_plus_mt" | "dae+mt" => Ok(Mode::DaePlusMt),
            "dae_then_mt" | "dae->mt" => Ok(Mode::DaeThenMt),
            other => Err(SamplerError::Config(format!("unknown mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub alpha: f64,
    pub min_count: usize,
    pub deletion_ratio: f64,
    pub seed: u64,
    pub n_examples: usize,
    pub mode: Mode,
    /// Fraction of examples in the denoising phase of `dae_then_mt`.
    pub phase_split: f64,
    /// Texts (or pairs) per batch; the objective is drawn once per batch.
    pub batch_size: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            alpha: 0.3,
            min_count: 100,
            deletion_ratio: 0.6,
            seed: 0,
            n_examples: 1000,
            mode: Mode::DaeThenMt,
            phase_split: 0.5,
            batch_size: 1,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<(), SamplerError> {
        let fail = |m: String| Err(SamplerError::Config(m));
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return fail(format!("alpha must be in (0, 1], got {}", self.alpha));
        }
        if !(self.deletion_ratio > 0.0 && self.deletion_ratio < 1.0) {
            return fail(format!("deletion_ratio must be in (0, 1), got {}", self.deletion_ratio));
        }
        if self.min_count == 0 {
            return fail("min_count must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.phase_split) {
            return fail(format!("phase_split must be in [0, 1], got {}", self.phase_split));
        }
        if self.batch_size == 0 {
            return fail("batch_size must be at least 1".into());
        }
        Ok(())
    }
}

/// Smoothed sampling distribution over languages (or language pairs).
#[derive(Debug, Clone, PartialEq)]
pub struct LanguageDistribution<K: Ord> {
    entries: BTreeMap<K, f64>,
}

impl<K: Ord + Clone> LanguageDistribution<K> {
    pub fn entries(&self) -> &BTreeMap<K, f64> {
        &self.entries
    }

    pub fn probability(&self, key: &K) -> f64 {
        self.entries.get(key).copied().unwrap_or(0.0)
    }
}

/// `p(L) = |L|^alpha / sum |L'|^alpha` over keys with at least `min_count` texts.
pub fn language_weights<K: Ord + Clone>(
    counts: &BTreeMap<K, usize>,
    alpha: f64,
    min_count: usize,
) -> Result<LanguageDistribution<K>, SamplerError> {
    let powered: Vec<(K, f64)> = counts
        .iter()
        .filter(|(_, &n)| n >= min_count && n > 0)
        .map(|(k, &n)| (k.clone(), (n as f64).powf(alpha)))
        .collect();
    if powered.is_empty() {
        return Err(SamplerError::NoEligibleLanguages { min_count });
    }
    let total: f64 = powered.iter().map(|(_, w)| w).sum();
    Ok(LanguageDistribution {
        entries: powered.into_iter().map(|(k, w)| (k, w / total)).collect(),
    })
}

/// Draws a key from a distribution, then a member uniformly within it.
struct KeyedSampler<'a, T> {
    weights: WeightedIndex<f64>,
    members: Vec<Vec<&'a T>>,
}

impl<'a, T> KeyedSampler<'a, T> {
    fn new<K: Ord + Clone + fmt::Display>(
        dist: &LanguageDistribution<K>,
        mut groups: BTreeMap<K, Vec<&'a T>>,
    ) -> Result<Self, SamplerError> {
        let mut members = Vec::with_capacity(dist.entries.len());
        let mut probs = Vec::with_capacity(dist.entries.len());
        for (key, &p) in &dist.entries {
            let group = groups
                .remove(key)
                .filter(|g| !g.is_empty())
                .ok_or_else(|| SamplerError::UnknownKey(key.to_string()))?;
            members.push(group);
            probs.push(p);
        }
        let weights = WeightedIndex::new(probs).map_err(|e| SamplerError::Config(e.to_string()))?;
        Ok(Self { weights, members })
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> &'a T {
        let group = &self.members[self.weights.sample(rng)];
        group[rng.random_range(0..group.len())]
    }
}

fn mono_groups(corpus: &Corpus) -> BTreeMap<crate::corpus::LanguageKey, Vec<&NewsText>> {
    let mut groups: BTreeMap<_, Vec<&NewsText>> = BTreeMap::new();
    for item in corpus.items() {
        groups.entry(item.key().clone()).or_default().push(item);
    }
    groups
}

fn pair_groups(pairs: &[ParallelPair]) -> BTreeMap<PairKey, Vec<&ParallelPair>> {
    let mut groups: BTreeMap<PairKey, Vec<&ParallelPair>> = BTreeMap::new();
    for p in pairs {
        groups.entry(p.pair_key()).or_default().push(p);
    }
    groups
}

/// `n` draws with replacement: a key from `dist`, then a text uniformly within it.
pub fn sample_texts<'a>(
    corpus: &'a Corpus,
    dist: &LanguageDistribution<crate::corpus::LanguageKey>,
    n: usize,
    seed: u64,
) -> Result<Vec<&'a NewsText>, SamplerError> {
    if n == 0 {
        return Ok(Vec::new());
    }
    let sampler = KeyedSampler::new(dist, mono_groups(corpus))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n).map(|_| sampler.draw(&mut rng)).collect())
}

/// Number of tokens deleted from a sequence of length `len`.
pub fn deletion_count(len: usize, ratio: f64) -> usize {
    if len == 0 {
        return 0;
    }
    ((ratio * len as f64).floor() as usize).min(len - 1)
}

/// Deletes `min(floor(ratio * l), l - 1)` uniformly chosen tokens; survivors
/// keep their relative order.
pub fn corrupt_delete<T: Clone, R: Rng>(tokens: &[T], ratio: f64, rng: &mut R) -> Result<Vec<T>, SamplerError> {
    if tokens.is_empty() {
        return Err(SamplerError::EmptyTokens);
    }
    let d = deletion_count(tokens.len(), ratio);
    let mut deleted = vec![false; tokens.len()];
    for i in index::sample(rng, tokens.len(), d) {
        deleted[i] = true;
    }
    Ok(tokens
        .iter()
        .zip(deleted)
        .filter(|(_, del)| !del)
        .map(|(t, _)| t.clone())
        .collect())
}

/// Denoising example: the space-joined corruption reconstructs the original text.
pub fn make_dae_example<R: Rng>(text: &NewsText, ratio: f64, rng: &mut R) -> Result<Seq2SeqExample, SamplerError> {
    let tokens: Vec<&str> = text.text().split_whitespace().collect();
    let kept = corrupt_delete(&tokens, ratio, rng)?;
    Ok(Seq2SeqExample::new(
        kept.join(" "),
        text.text(),
        Objective::Dae,
        ExampleLanguage::Mono(text.key().clone()),
    )?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    SrcToTgt,
    TgtToSrc,
}

/// Translation example: the source-side text stands in as the corruption of
/// its target-side translation. Neither side is modified.
pub fn make_mt_example(pair: &ParallelPair, direction: Direction) -> Seq2SeqExample {
    let (from, to) = match direction {
        Direction::SrcToTgt => (pair.src(), pair.tgt()),
        Direction::TgtToSrc => (pair.tgt(), pair.src()),
    };
    Seq2SeqExample::new(
        from.text(),
        to.text(),
        Objective::Mt,
        ExampleLanguage::Pair(from.key().clone(), to.key().clone()),
    )
    .expect("parallel pair texts are non-empty")
}

/// A group of examples sharing one objective draw.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub objective: Objective,
    pub examples: Vec<Seq2SeqExample>,
}

struct Sources<'a> {
    mono: Option<KeyedSampler<'a, NewsText>>,
    parallel: Option<KeyedSampler<'a, ParallelPair>>,
}

impl<'a> Sources<'a> {
    fn mono(&self) -> &KeyedSampler<'a, NewsText> {
        self.mono.as_ref().expect("mono sampler prepared for this mode")
    }

    fn parallel(&self) -> &KeyedSampler<'a, ParallelPair> {
        self.parallel.as_ref().expect("parallel sampler prepared for this mode")
    }
}

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord)]
struct TaggedPair(PairKey);

impl fmt::Display for TaggedPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.0 .0, self.0 .1)
    }
}

fn prepare<'a>(
    mono: &'a Corpus,
    parallel: &'a [ParallelPair],
    config: &SamplerConfig,
) -> Result<Sources<'a>, SamplerError> {
    let needs_mono = matches!(config.mode, Mode::Dae | Mode::DaeThenMt);
    let needs_parallel = matches!(config.mode, Mode::Mt | Mode::DaePlusMt | Mode::DaeThenMt);
    let mono_sampler = if needs_mono {
        if mono.is_empty() {
            return Err(SamplerError::MissingMono(config.mode));
        }
        let dist = language_weights(mono.per_key_counts(), config.alpha, config.min_count)?;
        Some(KeyedSampler::new(&dist, mono_groups(mono))?)
    } else {
        None
    };
    let parallel_sampler = if needs_parallel {
        if parallel.is_empty() {
            return Err(SamplerError::MissingParallel(config.mode));
        }
        let groups: BTreeMap<TaggedPair, Vec<&ParallelPair>> = pair_groups(parallel)
            .into_iter()
            .map(|(k, v)| (TaggedPair(k), v))
            .collect();
        let counts = groups.iter().map(|(k, v)| (k.clone(), v.len())).collect();
        let dist = language_weights(&counts, config.alpha, config.min_count)?;
        Some(KeyedSampler::new(&dist, groups)?)
    } else {
        None
    };
    Ok(Sources {
        mono: mono_sampler,
        parallel: parallel_sampler,
    })
}

fn dae_batch<R: Rng>(sources: &Sources, size: usize, ratio: f64, rng: &mut R) -> Result<Batch, SamplerError> {
    let examples = (0..size)
        .map(|_| make_dae_example(sources.mono().draw(rng), ratio, rng))
        .collect::<Result<_, _>>()?;
    Ok(Batch {
        objective: Objective::Dae,
        examples,
    })
}

fn mt_batch<R: Rng>(sources: &Sources, size: usize, rng: &mut R) -> Batch {
    Batch {
        objective: Objective::Mt,
        examples: (0..size)
            .map(|_| make_mt_example(sources.parallel().draw(rng), Direction::SrcToTgt))
            .collect(),
    }
}

/// Parallel-data denoising: both sides of each drawn pair are corrupted
/// independently.
fn parallel_dae_batch<R: Rng>(sources: &Sources, size: usize, ratio: f64, rng: &mut R) -> Result<Batch, SamplerError> {
    let mut examples = Vec::with_capacity(2 * size);
    for _ in 0..size {
        let pair = sources.parallel().draw(rng);
        examples.push(make_dae_example(pair.src(), ratio, rng)?);
        examples.push(make_dae_example(pair.tgt(), ratio, rng)?);
    }
    Ok(Batch {
        objective: Objective::Dae,
        examples,
    })
}

/// Generates batches until `config.n_examples` examples exist. The last
/// batch may be cut short.
pub fn schedule_batches(
    mono: &Corpus,
    parallel: &[ParallelPair],
    config: &SamplerConfig,
) -> Result<Vec<Batch>, SamplerError> {
    config.validate()?;
    let n = config.n_examples;
    if n == 0 {
        return Ok(Vec::new());
    }
    let sources = prepare(mono, parallel, config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let ratio = config.deletion_ratio;
    let bs = config.batch_size;
    let mut batches = Vec::new();
    let mut produced = 0usize;

    let mut push = |mut batch: Batch, produced: &mut usize| {
        batch.examples.truncate(n - *produced);
        *produced += batch.examples.len();
        batches.push(batch);
    };

    match config.mode {
        Mode::Dae => {
            while produced < n {
                let b = dae_batch(&sources, bs.min(n - produced), ratio, &mut rng)?;
                push(b, &mut produced);
            }
        }
        Mode::Mt => {
            while produced < n {
                let b = mt_batch(&sources, bs.min(n - produced), &mut rng);
                push(b, &mut produced);
            }
        }
        Mode::DaePlusMt => {
            while produced < n {
                let b = if rng.random_bool(0.5) {
                    parallel_dae_batch(&sources, bs, ratio, &mut rng)?
                } else {
                    mt_batch(&sources, bs, &mut rng)
                };
                push(b, &mut produced);
            }
        }
        Mode::DaeThenMt => {
            let phase_one = ((config.phase_split * n as f64).floor() as usize).min(n);
            while produced < phase_one {
                let b = dae_batch(&sources, bs.min(phase_one - produced), ratio, &mut rng)?;
                push(b, &mut produced);
            }
            while produced < n {
                let b = mt_batch(&sources, bs.min(n - produced), &mut rng);
                push(b, &mut produced);
            }
        }
    }
    Ok(batches)
}

/// The flattened example stream of [`schedule_batches`]; exactly `n_examples` long.
pub fn schedule_examples(
    mono: &Corpus,
    parallel: &[ParallelPair],
    config: &SamplerConfig,
) -> Result<Vec<Seq2SeqExample>, SamplerError> {
    Ok(schedule_batches(mono, parallel, config)?
        .into_iter()
        .flat_map(|b| b.examples)
        .collect())
}
