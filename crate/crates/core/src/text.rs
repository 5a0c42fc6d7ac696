//! Text normalization, slang lexicon substitution and the small tokenization
//! helpers shared by the classifier features and the retrieval embedder.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

/// Errors raised while building a [`Lexicon`].
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LexiconError {
    #[error("lexicon key {0:?} is not a single token")]
    MultiTokenKey(String),
    #[error("lexicon entry {0:?} maps to an empty replacement")]
    EmptyReplacement(String),
    #[error("lexicon substitution cycles through {0:?}")]
    Cycle(String),
}

/// Slang → standard-form map applied on whole tokens.
///
/// Replacements are resolved at construction time so that no replacement
/// token is itself a key. That keeps substitution a single pass and makes
/// [`normalize_text`] idempotent.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "BTreeMap<String, String>", into = "BTreeMap<String, String>")]
pub struct Lexicon {
    entries: BTreeMap<String, Vec<String>>,
}

impl Lexicon {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a lexicon from raw `(slang, standard)` pairs. Keys and values are
    /// passed through the base normalization first; chained entries such as
    /// `hie → hi`, `hi → hello` are flattened.
    pub fn from_pairs<I, K, V>(pairs: I) -> Result<Self, LexiconError>
    where
        I: IntoIterator<Item = (K, V)>,
        K: AsRef<str>,
        V: AsRef<str>,
    {
        let mut raw: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for (key, value) in pairs {
            let key = base_normalize(key.as_ref());
            if key.is_empty() || key.contains(' ') {
                return Err(LexiconError::MultiTokenKey(key));
            }
            let value: Vec<String> = base_normalize(value.as_ref())
                .split(' ')
                .filter(|t| !t.is_empty())
                .map(ToString::to_string)
                .collect();
            if value.is_empty() {
                return Err(LexiconError::EmptyReplacement(key));
            }
            raw.insert(key, value);
        }

        let mut entries = BTreeMap::new();
        for key in raw.keys() {
            let mut stack = Vec::new();
            let resolved = resolve(key, &raw, &mut stack)?;
            entries.insert(key.clone(), resolved);
        }
        Ok(Self { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<&[String]> {
        self.entries.get(token).map(Vec::as_slice)
    }
}

fn resolve(
    key: &str,
    raw: &BTreeMap<String, Vec<String>>,
    stack: &mut Vec<String>,
) -> Result<Vec<String>, LexiconError> {
    if stack.iter().any(|k| k == key) {
        return Err(LexiconError::Cycle(key.to_string()));
    }
    stack.push(key.to_string());
    let mut out = Vec::new();
    for token in &raw[key] {
        // identity entries (`ok → ok`) terminate here; `lol → lol haha` would grow forever
        if token == key && raw[key].len() > 1 {
            return Err(LexiconError::Cycle(key.to_string()));
        }
        if token != key && raw.contains_key(token.as_str()) {
            out.extend(resolve(token, raw, stack)?);
        } else {
            out.push(token.clone());
        }
    }
    stack.pop();
    Ok(out)
}

impl TryFrom<BTreeMap<String, String>> for Lexicon {
    type Error = LexiconError;

    fn try_from(map: BTreeMap<String, String>) -> Result<Self, Self::Error> {
        Self::from_pairs(map)
    }
}

impl From<Lexicon> for BTreeMap<String, String> {
    fn from(lexicon: Lexicon) -> Self {
        lexicon
            .entries
            .into_iter()
            .map(|(k, v)| (k, v.join(" ")))
            .collect()
    }
}

/// Canonical composition, lowercasing and whitespace collapsing.
pub fn base_normalize(raw: &str) -> String {
    let composed: String = raw.nfc().collect();
    // lowercasing can, rarely, leave a decomposed sequence behind
    let lowered: String = composed.to_lowercase().nfc().collect();
    let mut out = String::with_capacity(lowered.len());
    for token in lowered.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(token);
    }
    out
}

/// Normalizes a raw message: canonical composition, lowercase, collapsed
/// whitespace, then whole-token lexicon substitution.
pub fn normalize_text(raw: &str, lexicon: &Lexicon) -> String {
    let base = base_normalize(raw);
    if lexicon.is_empty() {
        return base;
    }
    let mut out = String::with_capacity(base.len());
    for token in base.split(' ').filter(|t| !t.is_empty()) {
        match lexicon.get(token) {
            Some(replacement) => {
                for r in replacement {
                    if !out.is_empty() {
                        out.push(' ');
                    }
                    out.push_str(r);
                }
            }
            None => {
                if !out.is_empty() {
                    out.push(' ');
                }
                out.push_str(token);
            }
        }
    }
    out
}

/// Lowercased word tokens with surrounding punctuation stripped; empty
/// tokens are dropped.
pub fn content_tokens(text: &str) -> Vec<String> {
    base_normalize(text)
        .split(' ')
        .map(|t| t.trim_matches(|c: char| !c.is_alphanumeric()))
        .filter(|t| !t.is_empty())
        .map(ToString::to_string)
        .collect()
}

/// Splits text into sentences at `.`, `!` or `?` followed by whitespace (or
/// end of text). Returned slices borrow from `text` and are trimmed.
pub fn sentences(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if matches!(c, '.' | '!' | '?') {
            let end = i + c.len_utf8();
            let at_boundary = match chars.peek() {
                None => true,
                Some((_, next)) => next.is_whitespace(),
            };
            if at_boundary {
                let s = text[start..end].trim();
                if !s.is_empty() {
                    out.push(s);
                }
                start = end;
            }
        }
    }
    let tail = text[start..].trim();
    if !tail.is_empty() {
        out.push(tail);
    }
    out
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// 64-bit FNV-1a over a namespace tag followed by the bytes of `parts`.
/// Stable across platforms and processes.
pub fn fnv1a(tag: u8, parts: &[&str]) -> u64 {
    let mut hash = FNV_OFFSET;
    let mut feed = |b: u8| {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(FNV_PRIME);
    };
    feed(tag);
    for (i, part) in parts.iter().enumerate() {
        if i > 0 {
            feed(0x1f);
        }
        for b in part.bytes() {
            feed(b);
        }
    }
    hash
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn lex(pairs: &[(&str, &str)]) -> Lexicon {
        Lexicon::from_pairs(pairs.iter().copied()).unwrap()
    }

    #[test]
    fn slang_greeting_normalizes() {
        let l = lex(&[("hie", "hi"), ("swit", "sweet")]);
        assert_eq!(normalize_text("Hie swit mom", &l), "hi sweet mom");
    }

    #[test]
    fn empty_input() {
        assert_eq!(normalize_text("", &Lexicon::new()), "");
    }

    #[test]
    fn nbsp_and_case_are_collapsed() {
        assert_eq!(
            normalize_text("  WADII\u{00A0}shamwari ", &Lexicon::new()),
            "wadii shamwari"
        );
    }

    #[test]
    fn decomposed_input_is_composed() {
        // "e" + combining acute → "é"
        assert_eq!(base_normalize("Cafe\u{0301}"), "caf\u{e9}");
    }

    #[test]
    fn chained_entries_are_flattened() {
        let l = lex(&[("hie", "hi"), ("hi", "hello there")]);
        assert_eq!(normalize_text("hie", &l), "hello there");
        assert_eq!(normalize_text("hello there", &l), "hello there");
    }

    #[test]
    fn cyclic_lexicon_is_rejected() {
        let err = Lexicon::from_pairs([("a", "b"), ("b", "a")]).unwrap_err();
        assert!(matches!(err, LexiconError::Cycle(_)));
    }

    #[test]
    fn multi_token_key_is_rejected() {
        assert!(matches!(
            Lexicon::from_pairs([("two words", "x")]),
            Err(LexiconError::MultiTokenKey(_))
        ));
    }

    #[test]
    fn sentence_split() {
        assert_eq!(
            sentences("One two. Three? Four! v1.2 ok"),
            alloc::vec!["One two.", "Three?", "Four!", "v1.2 ok"]
        );
    }

    #[test]
    fn content_tokens_strip_punctuation() {
        assert_eq!(
            content_tokens("Pace inoita MARI?"),
            alloc::vec!["pace", "inoita", "mari"]
        );
    }

    proptest! {
        #[test]
        fn normalization_is_idempotent(s in "\\PC{0,40}") {
            let l = lex(&[("hie", "hi"), ("swit", "sweet"), ("2moro", "tomorrow")]);
            let once = normalize_text(&s, &l);
            prop_assert_eq!(normalize_text(&once, &l), once);
        }

        #[test]
        fn normalized_text_has_no_edge_or_double_spaces(s in "[ \\t\\na-zA-Z\u{00A0}\u{00C0}-\u{00FF}]{0,40}") {
            let n = base_normalize(&s);
            prop_assert!(!n.starts_with(' ') && !n.ends_with(' ') && !n.contains("  "));
        }
    }
}
