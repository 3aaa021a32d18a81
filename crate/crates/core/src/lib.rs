//! Multilingual news corpus engineering and cross-lingual recommendation
//! evaluation.
//!
//! * [`corpus`]: domain types and the JSONL/TSV formats.
//! * [`pipeline`]: dedup and filtering stages that compile a clean corpus.
//! * [`sampler`]: temperature-smoothed sampling and seq2seq example export.
//! * [`scoring`]: embedding tables and the late-fusion scorer.
//! * [`eval`]: ranking metrics and the zero-shot cross-lingual harness.

pub mod corpus;
pub mod eval;
pub mod pipeline;
pub mod sampler;
pub mod scoring;

pub use corpus::{
    Candidate, Corpus, CorpusError, ExampleLanguage, Impression, LanguageKey, NewsText, Objective, ParallelPair,
    Seq2SeqExample,
};
pub use eval::{EvalError, EvalOptions, EvalReport};
pub use pipeline::{PipelineConfig, PipelineError, PipelineStats};
pub use sampler::{Mode, SamplerConfig, SamplerError};
pub use scoring::{ColdPolicy, EmbeddingTable, ScoringError};
