//! Document input and knowledge-base persistence.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use slangbot_core::rag::{Chunk, Document, EmbedderSpec, EmbeddingVector, KnowledgeBase};

use crate::error::{Error, Result};

pub const KB_FORMAT_VERSION: u32 = 1;

/// Reads documents from either a JSON array of `{id, title, body, metadata}`
/// or a directory of `.md`/`.txt` files (file stem = id, first heading =
/// title). Directory entries are read in file-name order.
pub fn load_documents(path: impl AsRef<Path>) -> Result<Vec<Document>> {
    let path = path.as_ref();
    let meta = fs::metadata(path).map_err(|e| Error::io(path, e))?;
    if meta.is_file() {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        return serde_json::from_str(&text).map_err(|e| Error::format(path, e));
    }

    let mut files: Vec<_> = fs::read_dir(path)
        .map_err(|e| Error::io(path, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && matches!(p.extension().and_then(|e| e.to_str()), Some("md" | "txt")))
        .collect();
    files.sort();

    let mut docs = Vec::with_capacity(files.len());
    for file in files {
        let text = fs::read_to_string(&file).map_err(|e| Error::io(&file, e))?;
        let id = file.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
        docs.push(parse_markdown(&id, &text));
    }
    Ok(docs)
}

/// Splits off the first Markdown heading as the title; without a heading the
/// id doubles as the title and the whole text is the body.
pub fn parse_markdown(id: &str, text: &str) -> Document {
    let mut title = None;
    let mut body = Vec::new();
    for line in text.lines() {
        if title.is_none() && line.trim_start().starts_with('#') {
            title = Some(line.trim_start().trim_start_matches('#').trim().to_string());
            continue;
        }
        body.push(line);
    }
    let mut metadata = BTreeMap::new();
    metadata.insert("source".to_string(), format!("{id}.md"));
    Document {
        id: id.to_string(),
        title: title.unwrap_or_else(|| id.to_string()),
        body: body.join("\n").trim().to_string(),
        metadata,
    }
}

#[derive(Serialize, Deserialize)]
struct KbFile {
    format_version: u32,
    embedder: EmbedderSpec,
    titles: BTreeMap<String, String>,
    chunks: Vec<Chunk>,
    /// Sparse `[index, value]` pairs per chunk, decimal reals.
    vectors: Vec<EmbeddingVector>,
}

pub fn encode_kb(kb: &KnowledgeBase) -> String {
    let file = KbFile {
        format_version: KB_FORMAT_VERSION,
        embedder: kb.embedder_spec().clone(),
        titles: kb.titles().clone(),
        chunks: kb.chunks().to_vec(),
        vectors: kb.vectors().to_vec(),
    };
    serde_json::to_string(&file).expect("knowledge base serializes")
}

pub fn decode_kb(text: &str) -> std::result::Result<KnowledgeBase, String> {
    let file: KbFile = serde_json::from_str(text).map_err(|e| e.to_string())?;
    if file.format_version != KB_FORMAT_VERSION {
        return Err(format!("unsupported format version {}", file.format_version));
    }
    KnowledgeBase::from_parts(file.embedder, file.chunks, file.vectors, file.titles).map_err(|e| e.to_string())
}

pub fn save_kb(kb: &KnowledgeBase, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_kb(kb)).map_err(|e| Error::io(path, e))
}

pub fn load_kb(path: impl AsRef<Path>) -> Result<KnowledgeBase> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    decode_kb(&text).map_err(|m| Error::format(path, m))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn markdown_heading_becomes_title() {
        let d = parse_markdown("ms-ds", "# MS in Data Science\n\nTwo years.\n");
        assert_eq!(d.title, "MS in Data Science");
        assert_eq!(d.body, "Two years.");
        let d = parse_markdown("plain", "No heading here.");
        assert_eq!((d.title.as_str(), d.body.as_str()), ("plain", "No heading here."));
    }

    #[test]
    fn kb_round_trip_retrieves_identically() {
        let docs = load_documents(concat!(env!("CARGO_MANIFEST_DIR"), "/data/kb")).unwrap();
        assert!(!docs.is_empty());
        let kb = KnowledgeBase::ingest(&docs, 120).unwrap();
        let back = decode_kb(&encode_kb(&kb)).unwrap();
        assert_eq!(back, kb);
        assert_eq!(back.retrieve("data science program", 5), kb.retrieve("data science program", 5));
    }

    #[test]
    fn json_document_list_and_bad_version() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("docs.json");
        fs::write(&path, r#"[{"id":"a","title":"A","body":"Alpha text."}]"#).unwrap();
        let docs = load_documents(&path).unwrap();
        assert_eq!(docs[0].title, "A");
        let kb = KnowledgeBase::ingest(&docs, 120).unwrap();
        let text = encode_kb(&kb).replacen("\"format_version\":1", "\"format_version\":7", 1);
        assert!(decode_kb(&text).unwrap_err().contains("version 7"));
    }
}
