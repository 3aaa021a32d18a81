use std::collections::HashSet;
use std::io::{BufRead, Write};

use chrono::{NaiveDateTime, TimeZone, Utc};

use super::{Candidate, CorpusError, Impression};

/// MIND timestamp layout, e.g. `11/14/2019 8:01:48 AM`.
pub const MIND_TIME_FORMAT: &str = "%m/%d/%Y %I:%M:%S %p";
const MIND_TIME_WRITE_FORMAT: &str = "%-m/%-d/%Y %-I:%M:%S %p";

fn err(line: usize, message: impl Into<String>) -> CorpusError {
    CorpusError::Malformed {
        line,
        message: message.into(),
    }
}

fn parse_candidate(token: &str, line: usize) -> Result<Candidate, CorpusError> {
    let (id, label) = token
        .rsplit_once('-')
        .ok_or_else(|| err(line, format!("candidate {token:?} has no label")))?;
    if id.is_empty() {
        return Err(err(line, format!("candidate {token:?} has an empty news id")));
    }
    let clicked = match label {
        "1" => true,
        "0" => false,
        other => return Err(err(line, format!("candidate {token:?}: label {other:?} is not 0 or 1"))),
    };
    Ok(Candidate {
        news_id: id.to_string(),
        clicked,
    })
}

/// Parses a MIND `behaviors.tsv` stream (no header).
pub fn parse_behaviors_tsv<R: BufRead>(reader: R) -> Result<Vec<Impression>, CorpusError> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() < 5 {
            return Err(err(
                line_no,
                format!("expected 5 tab-separated columns, found {}", cols.len()),
            ));
        }
        let naive = NaiveDateTime::parse_from_str(cols[2].trim(), MIND_TIME_FORMAT)
            .map_err(|e| err(line_no, format!("timestamp {:?}: {e}", cols[2])))?;
        let history = cols[3].split_whitespace().map(str::to_string).collect();
        let candidates = cols[4]
            .split_whitespace()
            .map(|t| parse_candidate(t, line_no))
            .collect::<Result<Vec<_>, _>>()?;
        if candidates.is_empty() {
            return Err(err(line_no, "impression has no candidates"));
        }
        let impression_id = cols[0].to_string();
        if !seen.insert(impression_id.clone()) {
            return Err(CorpusError::DuplicateId(impression_id));
        }
        out.push(Impression {
            impression_id,
            user_id: cols[1].to_string(),
            timestamp: Utc.from_utc_datetime(&naive),
            history,
            candidates,
        });
    }
    Ok(out)
}

/// Writes impressions in MIND layout. Returns bytes written.
pub fn write_behaviors_tsv<'a, W, I>(impressions: I, mut sink: W) -> Result<u64, CorpusError>
where
    W: Write,
    I: IntoIterator<Item = &'a Impression>,
{
    let mut written = 0u64;
    for imp in impressions {
        let candidates: Vec<String> = imp
            .candidates
            .iter()
            .map(|c| format!("{}-{}", c.news_id, u8::from(c.clicked)))
            .collect();
        let line = format!(
            "{}\t{}\t{}\t{}\t{}\n",
            imp.impression_id,
            imp.user_id,
            imp.timestamp.format(MIND_TIME_WRITE_FORMAT),
            imp.history.join(" "),
            candidates.join(" ")
        );
        sink.write_all(line.as_bytes())?;
        written += line.len() as u64;
    }
    sink.flush()?;
    Ok(written)
}
