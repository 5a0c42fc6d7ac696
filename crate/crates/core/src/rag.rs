//! Knowledge base for retrieval-augmented answers: chunking, the reference
//! character n-gram embedder, exact cosine top-k retrieval and an extractive
//! answer generator.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::SparseVector;
use crate::text::{base_normalize, content_tokens, fnv1a, sentences};

pub const DEFAULT_TOP_K: usize = 5;
pub const DEFAULT_MAX_CHUNK_WORDS: usize = 120;
const MAX_ANSWER_SENTENCES: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub title: String,
    pub body: String,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub doc_id: String,
    pub chunk_index: usize,
    pub text: String,
}

impl Chunk {
    /// `"<doc_id>#<chunk_index>"`.
    pub fn id(&self) -> String {
        format!("{}#{}", self.doc_id, self.chunk_index)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RagError {
    #[error("duplicate document id {0:?}")]
    DuplicateDocument(String),
    #[error("document {0:?} has an empty body")]
    EmptyBody(String),
    #[error("k must be at least 1")]
    ZeroK,
    #[error("max_chunk_words must be at least 1")]
    InvalidChunkLimit,
    #[error("knowledge base is inconsistent: {0}")]
    Inconsistent(String),
    #[error("retrieval backend failed: {0}")]
    Backend(String),
}

/// Unit-norm (or zero) embedding.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector(SparseVector);

impl EmbeddingVector {
    /// Normalizes `v`; the zero vector stays zero.
    pub fn from_sparse(v: SparseVector) -> Self {
        Self(v.normalized())
    }

    pub fn as_sparse(&self) -> &SparseVector {
        &self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    /// Cosine similarity; 0 when either side is the zero vector.
    pub fn cosine(&self, other: &EmbeddingVector) -> f64 {
        if self.is_zero() || other.is_zero() {
            0.0
        } else {
            self.0.dot(&other.0)
        }
    }
}

/// Description of an embedder, persisted with a knowledge base.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbedderSpec {
    pub kind: String,
    pub dimension: u32,
    pub min_order: usize,
    pub max_order: usize,
}

pub trait Embedder {
    fn spec(&self) -> EmbedderSpec;
    fn embed(&self, text: &str) -> EmbeddingVector;
}

/// Term-frequency vector of hashed character n-grams of the space-padded
/// normalized text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NgramEmbedder {
    dimension: u32,
    min_order: usize,
    max_order: usize,
}

pub const NGRAM_EMBEDDER_KIND: &str = "char-ngram-tf";

impl Default for NgramEmbedder {
    fn default() -> Self {
        Self { dimension: 1 << 14, min_order: 3, max_order: 5 }
    }
}

impl NgramEmbedder {
    pub fn from_spec(spec: &EmbedderSpec) -> Option<Self> {
        let ok = spec.kind == NGRAM_EMBEDDER_KIND
            && spec.dimension.is_power_of_two()
            && spec.min_order >= 1
            && spec.min_order <= spec.max_order;
        ok.then_some(Self { dimension: spec.dimension, min_order: spec.min_order, max_order: spec.max_order })
    }

    /// The hashed bucket of every n-gram of `text`, in generation order.
    pub fn buckets(&self, text: &str) -> Vec<u32> {
        let normalized = base_normalize(text);
        if normalized.is_empty() {
            return Vec::new();
        }
        let padded = format!(" {normalized} ");
        let bounds: Vec<usize> = padded
            .char_indices()
            .map(|(i, _)| i)
            .chain(core::iter::once(padded.len()))
            .collect();
        let n_chars = bounds.len() - 1;
        let mask = u64::from(self.dimension - 1);
        let mut out = Vec::new();
        for n in self.min_order..=self.max_order {
            for start in 0..n_chars.saturating_sub(n - 1) {
                let gram = &padded[bounds[start]..bounds[start + n]];
                out.push((fnv1a(0x40 | n as u8, &[gram]) & mask) as u32);
            }
        }
        out
    }
}

impl Embedder for NgramEmbedder {
    fn spec(&self) -> EmbedderSpec {
        EmbedderSpec {
            kind: NGRAM_EMBEDDER_KIND.to_string(),
            dimension: self.dimension,
            min_order: self.min_order,
            max_order: self.max_order,
        }
    }

    fn embed(&self, text: &str) -> EmbeddingVector {
        let pairs = self.buckets(text).into_iter().map(|b| (b, 1.0)).collect();
        EmbeddingVector::from_sparse(SparseVector::from_pairs(pairs))
    }
}

/// Splits a document body into chunks of at most `max_words` words.
///
/// Paragraphs are separated by blank lines. An oversized paragraph is packed
/// sentence by sentence, and a sentence that alone exceeds the limit is cut
/// into `max_words`-sized pieces. Chunk text is the word sequence joined by
/// single spaces.
pub fn chunk_document(doc_id: &str, body: &str, max_words: usize) -> Vec<Chunk> {
    let mut texts: Vec<String> = Vec::new();
    let mut paragraph: Vec<&str> = Vec::new();
    let flush_paragraph = |lines: &mut Vec<&str>, texts: &mut Vec<String>| {
        if lines.is_empty() {
            return;
        }
        let joined = lines.join(" ");
        lines.clear();
        let words: Vec<&str> = joined.split_whitespace().collect();
        if words.len() <= max_words {
            texts.push(words.join(" "));
            return;
        }
        let mut current: Vec<&str> = Vec::new();
        for sentence in sentences(&joined) {
            let sw: Vec<&str> = sentence.split_whitespace().collect();
            if current.len() + sw.len() <= max_words {
                current.extend(sw);
                continue;
            }
            if !current.is_empty() {
                texts.push(current.join(" "));
                current.clear();
            }
            let mut pieces = sw.chunks(max_words).peekable();
            while let Some(piece) = pieces.next() {
                if pieces.peek().is_some() {
                    texts.push(piece.join(" "));
                } else {
                    current.extend_from_slice(piece);
                }
            }
        }
        if !current.is_empty() {
            texts.push(current.join(" "));
        }
    };

    for line in body.lines() {
        if line.trim().is_empty() {
            flush_paragraph(&mut paragraph, &mut texts);
        } else {
            paragraph.push(line);
        }
    }
    flush_paragraph(&mut paragraph, &mut texts);

    texts
        .into_iter()
        .enumerate()
        .map(|(chunk_index, text)| Chunk { doc_id: doc_id.to_string(), chunk_index, text })
        .collect()
}

/// Immutable chunk index searched by exhaustive cosine scan.
#[derive(Debug, Clone, PartialEq)]
pub struct KnowledgeBase {
    spec: EmbedderSpec,
    chunks: Vec<Chunk>,
    vectors: Vec<EmbeddingVector>,
    titles: BTreeMap<String, String>,
}

impl KnowledgeBase {
    /// Chunks and embeds `documents` with the reference embedder.
    pub fn ingest(documents: &[Document], max_chunk_words: usize) -> Result<Self, RagError> {
        Self::ingest_with(documents, max_chunk_words, &NgramEmbedder::default())
    }

    pub fn ingest_with<E: Embedder + ?Sized>(
        documents: &[Document],
        max_chunk_words: usize,
        embedder: &E,
    ) -> Result<Self, RagError> {
        if max_chunk_words == 0 {
            return Err(RagError::InvalidChunkLimit);
        }
        let mut titles = BTreeMap::new();
        let mut chunks = Vec::new();
        for doc in documents {
            if titles.insert(doc.id.clone(), doc.title.clone()).is_some() {
                return Err(RagError::DuplicateDocument(doc.id.clone()));
            }
            if doc.body.trim().is_empty() {
                return Err(RagError::EmptyBody(doc.id.clone()));
            }
            chunks.extend(chunk_document(&doc.id, &doc.body, max_chunk_words));
        }
        let vectors = chunks.iter().map(|c| embedder.embed(&c.text)).collect();
        Ok(Self { spec: embedder.spec(), chunks, vectors, titles })
    }

    /// Reassembles a persisted knowledge base.
    pub fn from_parts(
        spec: EmbedderSpec,
        chunks: Vec<Chunk>,
        vectors: Vec<EmbeddingVector>,
        titles: BTreeMap<String, String>,
    ) -> Result<Self, RagError> {
        if chunks.len() != vectors.len() {
            return Err(RagError::Inconsistent(format!(
                "{} chunks but {} vectors",
                chunks.len(),
                vectors.len()
            )));
        }
        let mut seen = BTreeSet::new();
        for c in &chunks {
            if !titles.contains_key(&c.doc_id) {
                return Err(RagError::Inconsistent(format!("chunk {} has no document title", c.id())));
            }
            if !seen.insert((c.doc_id.clone(), c.chunk_index)) {
                return Err(RagError::Inconsistent(format!("duplicate chunk {}", c.id())));
            }
        }
        if vectors.iter().flat_map(|v| v.as_sparse().entries()).any(|&(i, _)| i >= spec.dimension) {
            return Err(RagError::Inconsistent("vector index outside the embedder dimension".into()));
        }
        Ok(Self { spec, chunks, vectors, titles })
    }

    pub fn embedder_spec(&self) -> &EmbedderSpec {
        &self.spec
    }

    pub fn chunks(&self) -> &[Chunk] {
        &self.chunks
    }

    pub fn vectors(&self) -> &[EmbeddingVector] {
        &self.vectors
    }

    pub fn titles(&self) -> &BTreeMap<String, String> {
        &self.titles
    }

    pub fn len(&self) -> usize {
        self.chunks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chunks.is_empty()
    }

    pub fn title_of<'s>(&'s self, doc_id: &'s str) -> &'s str {
        self.titles.get(doc_id).map(String::as_str).unwrap_or(doc_id)
    }

    /// Embeds `query` with the knowledge base's own reference embedder and
    /// returns the top `k` chunks.
    pub fn retrieve(&self, query: &str, k: usize) -> Result<Vec<RetrievalResult>, RagError> {
        let embedder = NgramEmbedder::from_spec(&self.spec).ok_or_else(|| {
            RagError::Backend(format!("no built-in embedder for {:?}", self.spec.kind))
        })?;
        self.retrieve_vector(&embedder.embed(query), k)
    }

    /// Exact top-`k` by cosine, ordered by descending score then
    /// `(doc_id, chunk_index)`.
    pub fn retrieve_vector(&self, query: &EmbeddingVector, k: usize) -> Result<Vec<RetrievalResult>, RagError> {
        if k == 0 {
            return Err(RagError::ZeroK);
        }
        let mut scored: Vec<(f64, usize)> =
            self.vectors.iter().enumerate().map(|(i, v)| (query.cosine(v), i)).collect();
        let order = |a: &(f64, usize), b: &(f64, usize)| -> Ordering {
            b.0.total_cmp(&a.0).then_with(|| {
                let (ca, cb) = (&self.chunks[a.1], &self.chunks[b.1]);
                (&ca.doc_id, ca.chunk_index).cmp(&(&cb.doc_id, cb.chunk_index))
            })
        };
        if scored.len() > k {
            scored.select_nth_unstable_by(k - 1, order);
            scored.truncate(k);
        }
        scored.sort_by(order);
        Ok(scored
            .into_iter()
            .map(|(score, i)| RetrievalResult {
                chunk: self.chunks[i].clone(),
                title: self.title_of(&self.chunks[i].doc_id).to_string(),
                score,
            })
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub chunk: Chunk,
    pub title: String,
    pub score: f64,
}

/// One row of a retrieval trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub chunk_id: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedAnswer {
    pub text: String,
    /// Ids of the chunks the answer sentences were taken from.
    pub sources: Vec<String>,
}

pub const DEFAULT_NO_INFORMATION_REPLY: &str =
    "Ndine urombo, handina ruzivo nezve izvozvo. I could not find that in the graduate program information.";

/// Extractive reference generator: up to three sentences from the results,
/// ranked by how many query tokens they share, rendered as
/// `"Based on <titles>: <sentences>"`.
///
/// Results with a non-positive score are ignored. When no sentence shares a
/// token with the query, the first sentence of the best result is used.
pub fn generate_answer(query: &str, results: &[RetrievalResult], no_information: &str) -> GeneratedAnswer {
    let usable: Vec<&RetrievalResult> = results.iter().filter(|r| r.score > 0.0).collect();
    if usable.is_empty() {
        return GeneratedAnswer { text: no_information.to_string(), sources: Vec::new() };
    }
    let query_tokens: BTreeSet<String> = content_tokens(query).into_iter().collect();

    // (overlap, rank, sentence index, sentence)
    let mut candidates: Vec<(usize, usize, usize, &str)> = Vec::new();
    for (rank, r) in usable.iter().enumerate() {
        for (si, s) in sentences(&r.chunk.text).into_iter().enumerate() {
            let tokens: BTreeSet<String> = content_tokens(s).into_iter().collect();
            let overlap = tokens.intersection(&query_tokens).count();
            candidates.push((overlap, rank, si, s));
        }
    }
    candidates.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut chosen: Vec<(usize, &str)> = candidates
        .iter()
        .filter(|c| c.0 > 0)
        .take(MAX_ANSWER_SENTENCES)
        .map(|c| (c.1, c.3))
        .collect();
    if chosen.is_empty() {
        if let Some(first) = candidates.iter().filter(|c| c.1 == 0).min_by_key(|c| c.2) {
            chosen.push((0, first.3));
        }
    }

    let mut titles: Vec<&str> = Vec::new();
    let mut sources: Vec<String> = Vec::new();
    for &(rank, _) in &chosen {
        let r = usable[rank];
        if !titles.contains(&r.title.as_str()) {
            titles.push(&r.title);
        }
        let id = r.chunk.id();
        if !sources.contains(&id) {
            sources.push(id);
        }
    }
    let body: Vec<&str> = chosen.iter().map(|c| c.1).collect();
    GeneratedAnswer { text: format!("Based on {}: {}", titles.join(", "), body.join(" ")), sources }
}

/// Answer plus the retrieval that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RagAnswer {
    pub text: String,
    pub retrieved: Vec<TraceEntry>,
    pub sources: Vec<String>,
}

/// Anything the router can delegate a domain question to.
pub trait KnowledgeSource {
    fn answer(&self, query: &str) -> Result<RagAnswer, RagError>;
}

/// Retrieval over a [`KnowledgeBase`] followed by the extractive generator.
#[derive(Debug, Clone)]
pub struct RagPipeline<'a> {
    pub kb: &'a KnowledgeBase,
    pub k: usize,
    pub no_information_reply: String,
}

impl<'a> RagPipeline<'a> {
    pub fn new(kb: &'a KnowledgeBase) -> Self {
        Self { kb, k: DEFAULT_TOP_K, no_information_reply: DEFAULT_NO_INFORMATION_REPLY.to_string() }
    }

    pub fn with_k(mut self, k: usize) -> Self {
        self.k = k;
        self
    }
}

impl KnowledgeSource for RagPipeline<'_> {
    fn answer(&self, query: &str) -> Result<RagAnswer, RagError> {
        let results = self.kb.retrieve(query, self.k)?;
        let generated = generate_answer(query, &results, &self.no_information_reply);
        Ok(RagAnswer {
            text: generated.text,
            retrieved: results
                .iter()
                .map(|r| TraceEntry { chunk_id: r.chunk.id(), score: r.score })
                .collect(),
            sources: generated.sources,
        })
    }
}
