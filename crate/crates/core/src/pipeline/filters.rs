use std::collections::{HashMap, HashSet};
use std::io::BufRead;

use unicode_general_category::{get_general_category, GeneralCategory};
use unicode_script::{Script, UnicodeScript};

use crate::corpus::{CorpusError, LanguageKey, NewsText};

/// Keeps the first occurrence of every distinct text, in input order.
pub fn exact_dedup<'a>(items: &[&'a NewsText]) -> Vec<&'a NewsText> {
    let mut seen = HashSet::with_capacity(items.len());
    items.iter().copied().filter(|item| seen.insert(item.text())).collect()
}

fn is_letter(c: char) -> bool {
    matches!(
        get_general_category(c),
        GeneralCategory::UppercaseLetter
            | GeneralCategory::LowercaseLetter
            | GeneralCategory::TitlecaseLetter
            | GeneralCategory::ModifierLetter
            | GeneralCategory::OtherLetter
    )
}

/// Per-script counts of letter-category scalars, Common and Inherited excluded.
pub fn script_letter_counts(text: &str) -> HashMap<Script, usize> {
    let mut counts = HashMap::new();
    for c in text.chars().filter(|&c| is_letter(c)) {
        let script = c.script();
        if !matches!(script, Script::Common | Script::Inherited | Script::Unknown) {
            *counts.entry(script).or_insert(0) += 1;
        }
    }
    counts
}

/// Scripts whose letters count towards an ISO 15924 code. Composite codes
/// (Jpan, Kore, Hans, ...) expand to their constituent scripts.
fn member_scripts(code: &str) -> Vec<&'static str> {
    match code {
        "Jpan" => vec!["Hira", "Kana", "Hani"],
        "Hrkt" => vec!["Hira", "Kana"],
        "Kore" => vec!["Hang", "Hani"],
        "Hans" | "Hant" => vec!["Hani"],
        "Hanb" => vec!["Hani", "Bopo"],
        _ => Vec::new(),
    }
}

/// True when letters of `script_code` hold a strict majority of the text's
/// scripted letters and there are at least `min_letters` of those.
pub fn matches_script(text: &str, script_code: &str, min_letters: usize) -> bool {
    let counts = script_letter_counts(text);
    let total: usize = counts.values().sum();
    if total == 0 || total < min_letters {
        return false;
    }
    let members = member_scripts(script_code);
    let in_script: usize = counts
        .iter()
        .filter(|(s, _)| {
            let name = s.short_name();
            name == script_code || members.contains(&name)
        })
        .map(|(_, n)| n)
        .sum();
    2 * in_script > total
}

/// Drops texts whose dominant script is not the key's script.
pub fn script_filter<'a>(items: &[&'a NewsText], key: &LanguageKey, min_letters: usize) -> Vec<&'a NewsText> {
    items
        .iter()
        .copied()
        .filter(|item| matches_script(item.text(), key.script(), min_letters))
        .collect()
}

/// Externally produced language-ID predictions, keyed by news id.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LidLabels(HashMap<String, String>);

impl LidLabels {
    pub fn get(&self, id: &str) -> Option<&str> {
        self.0.get(id).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.0.keys().map(String::as_str)
    }

    /// Parses `id<TAB>iso639_3` lines.
    pub fn parse_tsv<R: BufRead>(reader: R) -> Result<Self, CorpusError> {
        let mut map = HashMap::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            let line = line.trim_end_matches('\r');
            if line.is_empty() {
                continue;
            }
            let malformed = |message: String| CorpusError::Malformed { line: idx + 1, message };
            let (id, lang) = line
                .split_once('\t')
                .ok_or_else(|| malformed("expected id<TAB>lang".into()))?;
            let lang = lang.trim();
            if lang.len() != 3 || !lang.bytes().all(|b| b.is_ascii_lowercase()) {
                return Err(malformed(format!("invalid ISO 639-3 code {lang:?}")));
            }
            if map.insert(id.to_string(), lang.to_string()).is_some() {
                return Err(CorpusError::DuplicateId(id.to_string()));
            }
        }
        Ok(Self(map))
    }
}

impl FromIterator<(String, String)> for LidLabels {
    fn from_iter<T: IntoIterator<Item = (String, String)>>(iter: T) -> Self {
        Self(iter.into_iter().collect())
    }
}

/// Drops items whose predicted language disagrees with the key. Unlabeled
/// items pass; without labels everything passes.
pub fn lid_filter<'a>(items: &[&'a NewsText], key: &LanguageKey, labels: Option<&LidLabels>) -> Vec<&'a NewsText> {
    match labels {
        None => items.to_vec(),
        Some(labels) => items
            .iter()
            .copied()
            .filter(|item| labels.get(item.id()).is_none_or(|lang| lang == key.lang()))
            .collect(),
    }
}

/// Number of texts removed by the K%-shortest rule: `floor(K/100 * n)`.
pub fn length_filter_removals(n: usize, k_percent: f64) -> usize {
    // K*n is exact for integral K, so the division rounds only once.
    ((k_percent * n as f64) / 100.0).floor() as usize
}

/// Removes the `floor(K/100 * n)` shortest texts, ties broken by id; the
/// remainder keeps input order.
pub fn length_filter<'a>(items: &[&'a NewsText], k_percent: f64) -> Vec<&'a NewsText> {
    let n_removed = length_filter_removals(items.len(), k_percent).min(items.len());
    if n_removed == 0 {
        return items.to_vec();
    }
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.sort_by(|&a, &b| (items[a].char_len(), items[a].id()).cmp(&(items[b].char_len(), items[b].id())));
    let mut removed = vec![false; items.len()];
    for &i in &order[..n_removed] {
        removed[i] = true;
    }
    items
        .iter()
        .zip(removed)
        .filter(|(_, r)| !r)
        .map(|(item, _)| *item)
        .collect()
}
