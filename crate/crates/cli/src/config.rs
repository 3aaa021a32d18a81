use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use newsxlt::pipeline::PipelineConfig;
use newsxlt::sampler::SamplerConfig;
use newsxlt::scoring::{ColdPolicy, DEFAULT_MAX_HISTORY};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppConfig {
    pub pipeline: PipelineConfig,
    pub sampler: SamplerConfig,
    pub eval: EvalSettings,
    pub io: IoSettings,
    /// Accepted provenance tags; any source is accepted when absent.
    pub sources: Option<Vec<String>>,
    /// Overrides the pipeline and sampler seeds and seeds few-shot export.
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSettings {
    pub source_language: String,
    /// Restricts evaluation to these targets; all other tables are targets otherwise.
    pub target_languages: Vec<String>,
    pub max_history: usize,
    pub cold_policy: ColdPolicy,
    /// Cutoffs for nDCG; the report always carries @5 and @10.
    pub k: Vec<usize>,
    /// Scale every vector to unit length first (cosine instead of raw dot).
    pub l2_normalize: bool,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            source_language: "eng".into(),
            target_languages: Vec::new(),
            max_history: DEFAULT_MAX_HISTORY,
            cold_policy: ColdPolicy::Zero,
            k: vec![5, 10],
            l2_normalize: false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IoSettings {
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub stats: Option<PathBuf>,
    pub lid_labels: Option<PathBuf>,
    pub mono: Option<PathBuf>,
    pub parallel: Option<PathBuf>,
    pub behaviors: Option<PathBuf>,
    /// Language tag -> embedding file.
    pub embeddings: BTreeMap<String, PathBuf>,
    pub checkpoints: Vec<PathBuf>,
    pub report_json: Option<PathBuf>,
    pub report_csv: Option<PathBuf>,
    pub samples_output: Option<PathBuf>,
}

impl AppConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// The seed shared by every stage once overrides are applied.
    pub fn apply_seed(&mut self) {
        if let Some(seed) = self.seed {
            self.pipeline.seed = seed;
            self.sampler.seed = seed;
        }
    }

    pub fn fewshot_seed(&self) -> u64 {
        self.seed.unwrap_or(self.sampler.seed)
    }

    pub fn validate(&self) -> Result<()> {
        if self.eval.max_history == 0 {
            bail!("max_history must be at least 1");
        }
        if self.eval.k.iter().any(|k| ![5, 10].contains(k)) {
            bail!("unsupported nDCG cutoffs {:?}; only 5 and 10 are reported", self.eval.k);
        }
        let tag_ok = |t: &str| !t.is_empty() && t.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-');
        for tag in std::iter::once(&self.eval.source_language)
            .chain(&self.eval.target_languages)
            .chain(self.io.embeddings.keys())
        {
            if !tag_ok(tag) {
                bail!("malformed language tag {tag:?}");
            }
        }
        for (name, path) in [
            ("input", &self.io.input),
            ("output", &self.io.output),
            ("stats", &self.io.stats),
            ("behaviors", &self.io.behaviors),
        ] {
            if path.as_ref().is_some_and(|p| p.as_os_str().is_empty()) {
                bail!("io.{name} is an empty path");
            }
        }
        Ok(())
    }
}

/// Parses a `KEY=VALUE` command-line pair.
pub fn parse_assignment(s: &str) -> std::result::Result<(String, String), String> {
    s.split_once('=')
        .filter(|(k, v)| !k.is_empty() && !v.is_empty())
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .ok_or_else(|| format!("expected KEY=VALUE, got {s:?}"))
}
