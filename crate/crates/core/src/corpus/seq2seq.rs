use std::borrow::Cow;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{CorpusError, ExampleLanguage, LanguageKey, Objective, Seq2SeqExample};

#[derive(Serialize, Deserialize)]
struct Record<'a> {
    input: Cow<'a, str>,
    target: Cow<'a, str>,
    objective: Objective,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lang: Option<LanguageKey>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    src_lang: Option<LanguageKey>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tgt_lang: Option<LanguageKey>,
}

/// Writes examples as JSONL. Monolingual examples carry `lang`, paired ones
/// `src_lang`/`tgt_lang`. Returns bytes written.
pub fn write_seq2seq_jsonl<'a, W, I>(examples: I, mut sink: W) -> Result<u64, CorpusError>
where
    W: Write,
    I: IntoIterator<Item = &'a Seq2SeqExample>,
{
    let mut written = 0u64;
    for ex in examples {
        let (lang, src_lang, tgt_lang) = match ex.language() {
            ExampleLanguage::Mono(k) => (Some(k.clone()), None, None),
            ExampleLanguage::Pair(s, t) => (None, Some(s.clone()), Some(t.clone())),
        };
        let rec = Record {
            input: ex.input().into(),
            target: ex.target().into(),
            objective: ex.objective(),
            lang,
            src_lang,
            tgt_lang,
        };
        let mut line = serde_json::to_vec(&rec).expect("seq2seq record serializes");
        line.push(b'\n');
        sink.write_all(&line)?;
        written += line.len() as u64;
    }
    sink.flush()?;
    Ok(written)
}

pub fn parse_seq2seq_jsonl<R: BufRead>(reader: R) -> Result<Vec<Seq2SeqExample>, CorpusError> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |message: String| CorpusError::Malformed { line: line_no, message };
        let rec: Record = serde_json::from_str(&line).map_err(|e| malformed(e.to_string()))?;
        let language = match (rec.lang, rec.src_lang, rec.tgt_lang) {
            (Some(k), None, None) => ExampleLanguage::Mono(k),
            (None, Some(s), Some(t)) => ExampleLanguage::Pair(s, t),
            _ => return Err(malformed("expected either lang or src_lang+tgt_lang".into())),
        };
        let ex = Seq2SeqExample::new(rec.input, rec.target, rec.objective, language)
            .map_err(|e| malformed(e.to_string()))?;
        out.push(ex);
    }
    Ok(out)
}
