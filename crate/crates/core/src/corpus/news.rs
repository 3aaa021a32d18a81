use std::collections::{BTreeSet, HashSet};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{Corpus, CorpusError, LanguageKey, NewsText, ParallelPair};

/// Which provenance tags a reader accepts.
#[derive(Debug, Clone, Default)]
pub enum SourcePolicy {
    #[default]
    Any,
    Only(BTreeSet<String>),
}

impl SourcePolicy {
    fn check(&self, source: &str) -> Result<(), CorpusError> {
        match self {
            SourcePolicy::Only(allowed) if !allowed.contains(source) => {
                Err(CorpusError::UnknownSource(source.to_string()))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct NewsRecord<'a> {
    id: std::borrow::Cow<'a, str>,
    text: std::borrow::Cow<'a, str>,
    lang: std::borrow::Cow<'a, str>,
    script: std::borrow::Cow<'a, str>,
    source: std::borrow::Cow<'a, str>,
}

#[derive(Serialize, Deserialize)]
struct ParallelRecord<'a> {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    id: Option<std::borrow::Cow<'a, str>>,
    src_lang: std::borrow::Cow<'a, str>,
    src_script: std::borrow::Cow<'a, str>,
    tgt_lang: std::borrow::Cow<'a, str>,
    tgt_script: std::borrow::Cow<'a, str>,
    src_text: std::borrow::Cow<'a, str>,
    tgt_text: std::borrow::Cow<'a, str>,
    source: std::borrow::Cow<'a, str>,
}

fn malformed(line: usize, err: impl std::fmt::Display) -> CorpusError {
    CorpusError::Malformed {
        line,
        message: err.to_string(),
    }
}

/// Reads news JSONL into a corpus, preserving file order. Blank lines are skipped.
pub fn parse_news_jsonl<R: BufRead>(reader: R, sources: &SourcePolicy) -> Result<Corpus, CorpusError> {
    let mut items = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: NewsRecord = serde_json::from_str(&line).map_err(|e| malformed(line_no, e))?;
        let item = (|| {
            sources.check(&rec.source)?;
            let key = LanguageKey::new(&rec.lang, &rec.script)?;
            NewsText::new(rec.id.as_ref(), &rec.text, key, rec.source.as_ref())
        })()
        .map_err(|e| CorpusError::at_line(line_no, e))?;
        if !seen.insert(item.id().to_string()) {
            return Err(CorpusError::DuplicateId(item.id().to_string()));
        }
        items.push(item);
    }
    Ok(Corpus::from_unique(items))
}

/// Writes one compact JSON object per item, LF-terminated. Returns bytes written.
pub fn write_news_jsonl<'a, W, I>(items: I, mut sink: W) -> Result<u64, CorpusError>
where
    W: Write,
    I: IntoIterator<Item = &'a NewsText>,
{
    let mut written = 0u64;
    for item in items {
        let rec = NewsRecord {
            id: item.id().into(),
            text: item.text().into(),
            lang: item.key().lang().into(),
            script: item.key().script().into(),
            source: item.source().into(),
        };
        let mut line = serde_json::to_vec(&rec).expect("news record serializes");
        line.push(b'\n');
        sink.write_all(&line)?;
        written += line.len() as u64;
    }
    sink.flush()?;
    Ok(written)
}

/// Reads parallel JSONL. Records without an `id` get `L<line>`; the two
/// sides are addressed as `<id>:src` and `<id>:tgt`.
pub fn parse_parallel_jsonl<R: BufRead>(reader: R, sources: &SourcePolicy) -> Result<Vec<ParallelPair>, CorpusError> {
    let mut pairs = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ParallelRecord = serde_json::from_str(&line).map_err(|e| malformed(line_no, e))?;
        let id = rec
            .id
            .as_deref()
            .map(str::to_string)
            .unwrap_or_else(|| format!("L{line_no}"));
        if !seen.insert(id.clone()) {
            return Err(CorpusError::DuplicateId(id));
        }
        let pair = (|| {
            sources.check(&rec.source)?;
            let src_key = LanguageKey::new(&rec.src_lang, &rec.src_script)?;
            let tgt_key = LanguageKey::new(&rec.tgt_lang, &rec.tgt_script)?;
            let src = NewsText::new(format!("{id}:src"), &rec.src_text, src_key, rec.source.as_ref())?;
            let tgt = NewsText::new(format!("{id}:tgt"), &rec.tgt_text, tgt_key, rec.source.as_ref())?;
            ParallelPair::new(src, tgt)
        })()
        .map_err(|e| CorpusError::at_line(line_no, e))?;
        pairs.push(pair);
    }
    Ok(pairs)
}

pub fn write_parallel_jsonl<'a, W, I>(pairs: I, mut sink: W) -> Result<u64, CorpusError>
where
    W: Write,
    I: IntoIterator<Item = &'a ParallelPair>,
{
    let mut written = 0u64;
    for pair in pairs {
        let id = pair.src().id().strip_suffix(":src").unwrap_or(pair.src().id());
        let rec = ParallelRecord {
            id: Some(id.into()),
            src_lang: pair.src().key().lang().into(),
            src_script: pair.src().key().script().into(),
            tgt_lang: pair.tgt().key().lang().into(),
            tgt_script: pair.tgt().key().script().into(),
            src_text: pair.src().text().into(),
            tgt_text: pair.tgt().text().into(),
            source: pair.src().source().into(),
        };
        let mut line = serde_json::to_vec(&rec).expect("parallel record serializes");
        line.push(b'\n');
        sink.write_all(&line)?;
        written += line.len() as u64;
    }
    sink.flush()?;
    Ok(written)
}
