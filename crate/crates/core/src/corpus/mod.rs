//! Domain types for news corpora and the on-disk formats they travel in.
//!
//! Every text entering the toolkit goes through [`normalize_text`] when it is
//! constructed, so downstream deduplication compares canonical strings.

mod behaviors;
mod news;
mod normalize;
mod seq2seq;

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use behaviors::{parse_behaviors_tsv, write_behaviors_tsv, MIND_TIME_FORMAT};
pub use news::{parse_news_jsonl, parse_parallel_jsonl, write_news_jsonl, write_parallel_jsonl, SourcePolicy};
pub use normalize::{normalize_text, tokenize};
pub use seq2seq::{parse_seq2seq_jsonl, write_seq2seq_jsonl};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("duplicate id {0:?}")]
    DuplicateId(String),
    #[error("invalid language code {0:?}: expected 3 lowercase ASCII letters")]
    InvalidLang(String),
    #[error("invalid script code {0:?}: expected 1 uppercase and 3 lowercase ASCII letters")]
    InvalidScript(String),
    #[error("invalid language key {0:?}: expected <lang>_<Script>")]
    InvalidKey(String),
    #[error("source {0:?} is not in the configured source set")]
    UnknownSource(String),
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CorpusError {
    fn at_line(line: usize, err: CorpusError) -> CorpusError {
        match err {
            CorpusError::Malformed { .. } | CorpusError::DuplicateId(_) | CorpusError::Io(_) => err,
            other => CorpusError::Malformed {
                line,
                message: other.to_string(),
            },
        }
    }
}

/// ISO 639-3 language plus ISO 15924 script, e.g. `srp_Cyrl`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LanguageKey {
    lang: String,
    script: String,
}

impl LanguageKey {
    pub fn new(lang: &str, script: &str) -> Result<Self, CorpusError> {
        if lang.len() != 3 || !lang.bytes().all(|b| b.is_ascii_lowercase()) {
            return Err(CorpusError::InvalidLang(lang.to_string()));
        }
        let sb = script.as_bytes();
        if sb.len() != 4 || !sb[0].is_ascii_uppercase() || !sb[1..].iter().all(u8::is_ascii_lowercase) {
            return Err(CorpusError::InvalidScript(script.to_string()));
        }
        Ok(Self {
            lang: lang.to_string(),
            script: script.to_string(),
        })
    }

    pub fn lang(&self) -> &str {
        &self.lang
    }

    pub fn script(&self) -> &str {
        &self.script
    }
}

impl fmt::Display for LanguageKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}_{}", self.lang, self.script)
    }
}

impl FromStr for LanguageKey {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (lang, script) = s
            .split_once('_')
            .ok_or_else(|| CorpusError::InvalidKey(s.to_string()))?;
        Self::new(lang, script)
    }
}

impl Serialize for LanguageKey {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for LanguageKey {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Ordered pair of language keys identifying a translation direction.
pub type PairKey = (LanguageKey, LanguageKey);

/// A single news text. Text is stored normalized; `char_len` counts scalar values.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NewsText {
    id: String,
    text: String,
    key: LanguageKey,
    source: String,
    char_len: usize,
}

impl NewsText {
    pub fn new(
        id: impl Into<String>,
        raw_text: &str,
        key: LanguageKey,
        source: impl Into<String>,
    ) -> Result<Self, CorpusError> {
        let id = id.into();
        if id.is_empty() {
            return Err(CorpusError::Invalid("empty id".into()));
        }
        let source = source.into();
        if source.is_empty() {
            return Err(CorpusError::Invalid(format!("empty source for id {id:?}")));
        }
        let text = normalize_text(raw_text);
        if text.is_empty() {
            return Err(CorpusError::Invalid(format!("empty text for id {id:?}")));
        }
        let char_len = text.chars().count();
        Ok(Self {
            id,
            text,
            key,
            source,
            char_len,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn key(&self) -> &LanguageKey {
        &self.key
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn char_len(&self) -> usize {
        self.char_len
    }
}

/// Aligned source/target texts for one translation pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParallelPair {
    src: NewsText,
    tgt: NewsText,
}

impl ParallelPair {
    pub fn new(src: NewsText, tgt: NewsText) -> Result<Self, CorpusError> {
        if src.key == tgt.key {
            return Err(CorpusError::Invalid(format!(
                "parallel pair {:?} has identical source and target key {}",
                src.id, src.key
            )));
        }
        Ok(Self { src, tgt })
    }

    pub fn src(&self) -> &NewsText {
        &self.src
    }

    pub fn tgt(&self) -> &NewsText {
        &self.tgt
    }

    pub fn pair_key(&self) -> PairKey {
        (self.src.key.clone(), self.tgt.key.clone())
    }
}

/// Ordered collection of news texts with unique ids.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    items: Vec<NewsText>,
    per_key_counts: BTreeMap<LanguageKey, usize>,
}

impl Corpus {
    pub fn new(items: Vec<NewsText>) -> Result<Self, CorpusError> {
        let mut seen = HashSet::with_capacity(items.len());
        for item in &items {
            if !seen.insert(item.id.as_str()) {
                return Err(CorpusError::DuplicateId(item.id.clone()));
            }
        }
        Ok(Self::from_unique(items))
    }

    /// Builds a corpus from items already known to have unique ids (e.g. a
    /// filtered subset of another corpus).
    pub(crate) fn from_unique(items: Vec<NewsText>) -> Self {
        let mut per_key_counts = BTreeMap::new();
        for item in &items {
            *per_key_counts.entry(item.key.clone()).or_insert(0) += 1;
        }
        Self { items, per_key_counts }
    }

    pub fn items(&self) -> &[NewsText] {
        &self.items
    }

    pub fn into_items(self) -> Vec<NewsText> {
        self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn per_key_counts(&self) -> &BTreeMap<LanguageKey, usize> {
        &self.per_key_counts
    }

    /// Item indices grouped by language key, each group in corpus order.
    pub fn indices_by_key(&self) -> BTreeMap<LanguageKey, Vec<usize>> {
        let mut groups: BTreeMap<LanguageKey, Vec<usize>> = BTreeMap::new();
        for (i, item) in self.items.iter().enumerate() {
            groups.entry(item.key.clone()).or_default().push(i);
        }
        groups
    }
}

/// One MIND behavior record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Impression {
    pub impression_id: String,
    pub user_id: String,
    pub timestamp: DateTime<Utc>,
    /// Clicked news ids, oldest first.
    pub history: Vec<String>,
    pub candidates: Vec<Candidate>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Candidate {
    pub news_id: String,
    pub clicked: bool,
}

impl Impression {
    pub fn labels(&self) -> Vec<u8> {
        self.candidates.iter().map(|c| u8::from(c.clicked)).collect()
    }

    /// Every news id referenced by this impression, history first.
    pub fn news_ids(&self) -> impl Iterator<Item = &str> {
        self.history
            .iter()
            .map(String::as_str)
            .chain(self.candidates.iter().map(|c| c.news_id.as_str()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    Dae,
    Mt,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ExampleLanguage {
    Mono(LanguageKey),
    Pair(LanguageKey, LanguageKey),
}

/// A reconstruction example: `target` is reconstructed from `input`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Seq2SeqExample {
    input: String,
    target: String,
    objective: Objective,
    language: ExampleLanguage,
}

impl Seq2SeqExample {
    pub fn new(
        input: impl Into<String>,
        target: impl Into<String>,
        objective: Objective,
        language: ExampleLanguage,
    ) -> Result<Self, CorpusError> {
        let input = input.into();
        let target = target.into();
        if input.is_empty() || target.is_empty() {
            return Err(CorpusError::Invalid(
                "seq2seq input and target must be non-empty".into(),
            ));
        }
        if objective == Objective::Mt && !matches!(language, ExampleLanguage::Pair(..)) {
            return Err(CorpusError::Invalid("mt examples need a language pair".into()));
        }
        Ok(Self {
            input,
            target,
            objective,
            language,
        })
    }

    pub fn input(&self) -> &str {
        &self.input
    }

    pub fn target(&self) -> &str {
        &self.target
    }

    pub fn objective(&self) -> Objective {
        self.objective
    }

    pub fn language(&self) -> &ExampleLanguage {
        &self.language
    }
}
