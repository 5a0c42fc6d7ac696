//! Corpus and slang lexicon files.

use std::fs;
use std::path::Path;

use slangbot_core::corpus::Corpus;
use slangbot_core::text::Lexicon;

use crate::error::{Error, Result};

/// Reads a line-delimited JSON corpus. Missing `normalized_text` fields are
/// filled in with `lexicon`. All invalid lines are reported together.
pub fn load_corpus(path: impl AsRef<Path>, lexicon: &Lexicon) -> Result<Corpus> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Corpus::parse_jsonl(&text, lexicon).map_err(|errors| Error::Corpus { path: path.to_path_buf(), errors })
}

pub fn save_corpus(path: impl AsRef<Path>, corpus: &Corpus) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, corpus.to_jsonl()).map_err(|e| Error::io(path, e))
}

/// Parses `slang<TAB>standard` lines. Blank lines and lines starting with
/// `#` are ignored.
pub fn parse_lexicon(text: &str) -> std::result::Result<Lexicon, String> {
    let mut pairs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (slang, standard) = line
            .split_once('\t')
            .ok_or_else(|| format!("line {}: expected `slang<TAB>standard`", i + 1))?;
        pairs.push((slang.to_string(), standard.to_string()));
    }
    Lexicon::from_pairs(pairs).map_err(|e| e.to_string())
}

pub fn load_lexicon(path: impl AsRef<Path>) -> Result<Lexicon> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_lexicon(&text).map_err(|m| Error::format(path, m))
}
