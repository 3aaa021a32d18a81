use unicode_normalization::UnicodeNormalization;

/// Canonicalizes raw text: NFC composition, trimmed, and every internal run
/// of whitespace collapsed to a single ASCII space.
pub fn normalize_text(raw: &str) -> String {
    let composed: String = raw.nfc().collect();
    let mut out = String::with_capacity(composed.len());
    for token in composed.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(token);
    }
    out
}

/// Whitespace tokenization of already normalized text.
pub fn tokenize(text: &str) -> Vec<&str> {
    text.split_whitespace().collect()
}
