//! Embedding and exact nearest-neighbor retrieval over document stores.
//!
//! A *basic* store pools every document of a source selection across all
//! projects; an *api-level* store holds only documents linked to one API.
//! Stores are immutable once built and retrieval is a pure function of the
//! store, the query and `k`.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeSet, BinaryHeap};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, DocumentChunk, SourceKind};

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("cannot embed empty text")]
    EmptyText,
    #[error("text has no embeddable tokens")]
    NoFeatures,
    #[error("embedding contains a non-finite value")]
    NonFinite,
    #[error("dimension mismatch: store has {store}, vector has {vector}")]
    Dimension { store: usize, vector: usize },
    #[error("duplicate document {0} in store")]
    DuplicateDocument(String),
    #[error("unknown source selector {0:?}")]
    UnknownSelector(String),
    #[error("store file {path}: {message}")]
    Format { path: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Which document sources a store or retrieval draws from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceSelector {
    ApiDocs,
    Issues,
    Qas,
    Combined,
}

impl SourceSelector {
    pub const ALL: [SourceSelector; 4] = [
        SourceSelector::ApiDocs,
        SourceSelector::Issues,
        SourceSelector::Qas,
        SourceSelector::Combined,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SourceSelector::ApiDocs => "api_docs",
            SourceSelector::Issues => "issues",
            SourceSelector::Qas => "qas",
            SourceSelector::Combined => "combined",
        }
    }

    pub fn admits(self, kind: SourceKind) -> bool {
        match self {
            SourceSelector::ApiDocs => kind == SourceKind::ApiDoc,
            SourceSelector::Issues => kind == SourceKind::Issue,
            SourceSelector::Qas => kind == SourceKind::Qa,
            SourceSelector::Combined => true,
        }
    }

    /// The single-source selector holding documents of `kind`.
    pub fn for_kind(kind: SourceKind) -> Self {
        match kind {
            SourceKind::ApiDoc => SourceSelector::ApiDocs,
            SourceKind::Issue => SourceSelector::Issues,
            SourceKind::Qa => SourceSelector::Qas,
        }
    }
}

impl fmt::Display for SourceSelector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SourceSelector {
    type Err = RetrievalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SourceSelector::ALL
            .into_iter()
            .find(|sel| sel.as_str() == s)
            .ok_or_else(|| RetrievalError::UnknownSelector(s.to_owned()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StoreScope {
    Basic { selector: SourceSelector },
    ApiLevel { api_name: String, selector: SourceSelector },
}

impl StoreScope {
    pub fn basic(selector: SourceSelector) -> Self {
        StoreScope::Basic { selector }
    }

    pub fn api_level(api_name: impl Into<String>, selector: SourceSelector) -> Self {
        StoreScope::ApiLevel {
            api_name: api_name.into(),
            selector,
        }
    }

    pub fn selector(&self) -> SourceSelector {
        match self {
            StoreScope::Basic { selector } | StoreScope::ApiLevel { selector, .. } => *selector,
        }
    }

    pub fn store_id(&self) -> String {
        match self {
            StoreScope::Basic { selector } => format!("basic.{selector}"),
            StoreScope::ApiLevel { api_name, selector } => format!("api.{api_name}.{selector}"),
        }
    }

    fn admits(&self, doc: &DocumentChunk) -> bool {
        match self {
            StoreScope::Basic { selector } => selector.admits(doc.source_kind),
            StoreScope::ApiLevel { api_name, selector } => {
                selector.admits(doc.source_kind) && doc.mentions_api(api_name)
            }
        }
    }
}

/// Unit-norm embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    /// Normalizes `values` to unit length.
    pub fn normalized(mut values: Vec<f64>) -> Result<Self, RetrievalError> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(RetrievalError::NonFinite);
        }
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(RetrievalError::NoFeatures);
        }
        values.iter_mut().for_each(|v| *v /= norm);
        Ok(EmbeddingVector(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dimension(&self) -> usize {
        self.0.len()
    }

    /// Cosine similarity; both vectors are unit length so this is the dot product.
    pub fn cosine(&self, other: &EmbeddingVector) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }
}

pub trait Embedder: Send + Sync {
    /// Identifies the backend and its configuration, for provenance hashing.
    fn id(&self) -> String;
    fn dimension(&self) -> usize;
    fn embed(&self, text: &str) -> Result<EmbeddingVector, RetrievalError>;
}

/// Feature hashing of lowercased word unigrams and bigrams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashingEmbedder {
    dimension: usize,
}

impl Default for HashingEmbedder {
    fn default() -> Self {
        HashingEmbedder { dimension: 256 }
    }
}

impl HashingEmbedder {
    pub fn new(dimension: usize) -> Self {
        assert!(dimension > 0, "embedding dimension must be positive");
        HashingEmbedder { dimension }
    }
}

// 64-bit FNV-1a; stable across platforms and releases.
fn fnv1a(parts: &[&[u8]]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for part in parts {
        for &b in *part {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}

impl Embedder for HashingEmbedder {
    fn id(&self) -> String {
        format!("hashing-ngram12-d{}", self.dimension)
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, RetrievalError> {
        if text.trim().is_empty() {
            return Err(RetrievalError::EmptyText);
        }
        let lowered = text.to_lowercase();
        let words: Vec<&str> = lowered
            .split(|c: char| !(c.is_alphanumeric() || c == '_'))
            .filter(|w| !w.is_empty())
            .collect();
        let mut values = vec![0.0; self.dimension];
        let d = self.dimension as u64;
        for w in &words {
            values[(fnv1a(&[b"1:", w.as_bytes()]) % d) as usize] += 1.0;
        }
        for pair in words.windows(2) {
            values[(fnv1a(&[b"2:", pair[0].as_bytes(), b" ", pair[1].as_bytes()]) % d) as usize] += 1.0;
        }
        EmbeddingVector::normalized(values)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreEntry {
    pub doc_id: String,
    pub vector: EmbeddingVector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorStore {
    scope: StoreScope,
    dimension: usize,
    // sorted by doc_id
    entries: Vec<StoreEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievedDoc {
    pub doc_id: String,
    pub similarity: f64,
    pub rank: usize,
}

#[derive(Serialize, Deserialize)]
struct StoreHeader {
    format: String,
    store_id: String,
    scope: StoreScope,
    dimension: usize,
    count: usize,
}

const STORE_FORMAT: &str = "ragtest-store/1";

impl VectorStore {
    pub fn from_entries(
        scope: StoreScope,
        dimension: usize,
        mut entries: Vec<StoreEntry>,
    ) -> Result<Self, RetrievalError> {
        if let Some(e) = entries.iter().find(|e| e.vector.dimension() != dimension) {
            return Err(RetrievalError::Dimension {
                store: dimension,
                vector: e.vector.dimension(),
            });
        }
        entries.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));
        if let Some(w) = entries.windows(2).find(|w| w[0].doc_id == w[1].doc_id) {
            return Err(RetrievalError::DuplicateDocument(w[0].doc_id.clone()));
        }
        Ok(VectorStore {
            scope,
            dimension,
            entries,
        })
    }

    pub fn scope(&self) -> &StoreScope {
        &self.scope
    }

    pub fn store_id(&self) -> String {
        self.scope.store_id()
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[StoreEntry] {
        &self.entries
    }

    pub fn doc_ids(&self) -> BTreeSet<&str> {
        self.entries.iter().map(|e| e.doc_id.as_str()).collect()
    }

    pub fn save(&self, path: &Path) -> Result<(), RetrievalError> {
        let mut w = BufWriter::new(File::create(path)?);
        let header = StoreHeader {
            format: STORE_FORMAT.into(),
            store_id: self.store_id(),
            scope: self.scope.clone(),
            dimension: self.dimension,
            count: self.entries.len(),
        };
        serde_json::to_writer(&mut w, &header).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
        for e in &self.entries {
            serde_json::to_writer(&mut w, e).map_err(std::io::Error::from)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, RetrievalError> {
        let bad = |message: String| RetrievalError::Format {
            path: path.display().to_string(),
            message,
        };
        let mut lines = BufReader::new(File::open(path)?).lines();
        let header_line = lines.next().ok_or_else(|| bad("missing header".into()))??;
        let header: StoreHeader = serde_json::from_str(&header_line).map_err(|e| bad(e.to_string()))?;
        if header.format != STORE_FORMAT {
            return Err(bad(format!("unsupported format {}", header.format)));
        }
        let mut entries = Vec::with_capacity(header.count);
        for line in lines {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            entries.push(serde_json::from_str::<StoreEntry>(&line).map_err(|e| bad(e.to_string()))?);
        }
        if entries.len() != header.count {
            return Err(bad(format!("header count {} but {} entries", header.count, entries.len())));
        }
        VectorStore::from_entries(header.scope, header.dimension, entries)
    }
}

/// Embeds every corpus document admitted by `scope`.
///
/// Embeddings are computed over the (already truncated) body, the same text
/// later placed in prompts.
pub fn build_store(corpus: &Corpus, scope: StoreScope, embedder: &dyn Embedder) -> Result<VectorStore, RetrievalError> {
    let entries = corpus
        .documents()
        .iter()
        .filter(|d| scope.admits(d))
        .map(|d| {
            Ok(StoreEntry {
                doc_id: d.doc_id.clone(),
                vector: embedder.embed(&d.body)?,
            })
        })
        .collect::<Result<Vec<_>, RetrievalError>>()?;
    VectorStore::from_entries(scope, embedder.dimension(), entries)
}

struct Candidate<'a> {
    similarity: f64,
    doc_id: &'a str,
}

impl Candidate<'_> {
    // Greater = better: higher similarity, then smaller doc id.
    fn better_cmp(&self, other: &Self) -> Ordering {
        self.similarity
            .total_cmp(&other.similarity)
            .then_with(|| other.doc_id.cmp(self.doc_id))
    }
}

impl PartialEq for Candidate<'_> {
    fn eq(&self, other: &Self) -> bool {
        self.better_cmp(other) == Ordering::Equal
    }
}
impl Eq for Candidate<'_> {}
impl PartialOrd for Candidate<'_> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Candidate<'_> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.better_cmp(other)
    }
}

/// Top-`k` documents by cosine similarity to `query`, ties broken by doc id.
pub fn retrieve_vector(store: &VectorStore, query: &EmbeddingVector, k: usize) -> Result<Vec<RetrievedDoc>, RetrievalError> {
    assert!(k >= 1, "k must be at least 1");
    if query.dimension() != store.dimension {
        return Err(RetrievalError::Dimension {
            store: store.dimension,
            vector: query.dimension(),
        });
    }
    // min-heap of the k best seen so far
    let mut heap: BinaryHeap<Reverse<Candidate<'_>>> = BinaryHeap::with_capacity(k + 1);
    for e in &store.entries {
        let cand = Candidate {
            similarity: query.cosine(&e.vector),
            doc_id: &e.doc_id,
        };
        if heap.len() < k {
            heap.push(Reverse(cand));
        } else if heap.peek().is_some_and(|Reverse(worst)| cand > *worst) {
            heap.pop();
            heap.push(Reverse(cand));
        }
    }
    let mut best: Vec<Candidate<'_>> = heap.into_iter().map(|Reverse(c)| c).collect();
    best.sort_by(|a, b| b.cmp(a));
    Ok(best
        .into_iter()
        .enumerate()
        .map(|(i, c)| RetrievedDoc {
            doc_id: c.doc_id.to_owned(),
            similarity: c.similarity,
            rank: i + 1,
        })
        .collect())
}

pub fn retrieve(
    store: &VectorStore,
    embedder: &dyn Embedder,
    query_text: &str,
    k: usize,
) -> Result<Vec<RetrievedDoc>, RetrievalError> {
    if store.is_empty() {
        return Ok(Vec::new());
    }
    let q = embedder.embed(query_text)?;
    retrieve_vector(store, &q, k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{ApiRecord, CorpusBuilder, LineSpan, RawDocument};
    use crate::tokens::CharQuarterCounter;
    use proptest::prelude::*;

    fn toy_corpus() -> Corpus {
        let api = |name: &str| ApiRecord {
            api_name: name.into(),
            project: "p".into(),
            signature: format!("{name}()"),
            description: "does things".into(),
            example_code: None,
            defining_file: "p/m.py".into(),
            class_name: "C".into(),
            class_line_span: LineSpan { start: 1, end: 2 },
        };
        let raw = |id: &str, kind, body: &str| RawDocument {
            doc_id: id.into(),
            source_kind: kind,
            project: "p".into(),
            title: id.into(),
            body: body.into(),
            replies: vec![],
        };
        let mut b = CorpusBuilder::new(&CharQuarterCounter);
        b.add_apis([api("p.m.Alpha"), api("p.m.Beta")]);
        b.add_documents([
            raw("i1", SourceKind::Issue, "p.m.Alpha crashes"),
            raw("i2", SourceKind::Issue, "p.m.Alpha slow"),
            raw("i3", SourceKind::Issue, "p.m.Beta wrong"),
            raw("q1", SourceKind::Qa, "how to use p.m.Beta"),
            raw("q2", SourceKind::Qa, "p.m.Alpha and p.m.Beta together"),
        ]);
        b.build().unwrap()
    }

    #[test]
    fn embedding_is_deterministic_and_unit() {
        let e = HashingEmbedder::default();
        let a = e.embed("Generate a python unit test").unwrap();
        assert_eq!(a, e.embed("Generate a python unit test").unwrap());
        let norm: f64 = a.values().iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-9);
        assert!(matches!(e.embed(""), Err(RetrievalError::EmptyText)));
        assert!(matches!(e.embed("  \n"), Err(RetrievalError::EmptyText)));
    }

    #[test]
    fn distinct_texts_are_not_identical() {
        let e = HashingEmbedder::default();
        let texts: Vec<String> = (0..100).map(|i| format!("document number {i} about topic t{}", i * 7)).collect();
        let vecs: Vec<_> = texts.iter().map(|t| e.embed(t).unwrap()).collect();
        for i in 0..vecs.len() {
            for j in (i + 1)..vecs.len() {
                assert!(vecs[i].cosine(&vecs[j]) < 1.0, "{} vs {}", texts[i], texts[j]);
            }
        }
    }

    #[test]
    fn store_scopes() {
        let corpus = toy_corpus();
        let e = HashingEmbedder::default();
        let issues = build_store(&corpus, StoreScope::basic(SourceSelector::Issues), &e).unwrap();
        assert_eq!(issues.len(), 3);
        let qas = build_store(&corpus, StoreScope::basic(SourceSelector::Qas), &e).unwrap();
        let docs = build_store(&corpus, StoreScope::basic(SourceSelector::ApiDocs), &e).unwrap();
        let combined = build_store(&corpus, StoreScope::basic(SourceSelector::Combined), &e).unwrap();
        assert_eq!(combined.len(), 7);
        let union: BTreeSet<&str> = issues.doc_ids().into_iter().chain(qas.doc_ids()).chain(docs.doc_ids()).collect();
        assert_eq!(combined.doc_ids(), union);

        let alpha_issues = build_store(&corpus, StoreScope::api_level("p.m.Alpha", SourceSelector::Issues), &e).unwrap();
        assert_eq!(alpha_issues.len(), 2);
        assert!(alpha_issues.doc_ids().is_subset(&issues.doc_ids()));
        let alpha_docs = build_store(&corpus, StoreScope::api_level("p.m.Alpha", SourceSelector::ApiDocs), &e).unwrap();
        assert_eq!(alpha_docs.len(), 1);
        let missing = build_store(&corpus, StoreScope::api_level("p.m.Gamma", SourceSelector::Qas), &e).unwrap();
        assert!(missing.is_empty());
        assert!(retrieve(&missing, &e, "anything", 3).unwrap().is_empty());
    }

    #[test]
    fn self_query_ranks_first() {
        let corpus = toy_corpus();
        let e = HashingEmbedder::default();
        let store = build_store(&corpus, StoreScope::basic(SourceSelector::Combined), &e).unwrap();
        let body = &corpus.document("q1").unwrap().body;
        let hits = retrieve(&store, &e, body, 3).unwrap();
        assert_eq!(hits[0].doc_id, "q1");
        assert!((hits[0].similarity - 1.0).abs() < 1e-9);
        assert_eq!(hits.iter().map(|h| h.rank).collect::<Vec<_>>(), vec![1, 2, 3]);
        assert_eq!(retrieve(&store, &e, body, 50).unwrap().len(), store.len());
    }

    #[test]
    fn ties_break_by_doc_id() {
        let v = EmbeddingVector::normalized(vec![1.0, 0.0]).unwrap();
        let entries = ["c", "a", "b"]
            .iter()
            .map(|id| StoreEntry { doc_id: id.to_string(), vector: v.clone() })
            .collect();
        let store = VectorStore::from_entries(StoreScope::basic(SourceSelector::Qas), 2, entries).unwrap();
        let ids: Vec<_> = retrieve_vector(&store, &v, 2).unwrap().into_iter().map(|r| r.doc_id).collect();
        assert_eq!(ids, vec!["a", "b"]);
    }

    #[test]
    fn store_file_round_trip() {
        let corpus = toy_corpus();
        let e = HashingEmbedder::default();
        let store = build_store(&corpus, StoreScope::api_level("p.m.Beta", SourceSelector::Combined), &e).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.store");
        store.save(&path).unwrap();
        assert_eq!(VectorStore::load(&path).unwrap(), store);
    }

    #[test]
    fn selector_parse() {
        for s in SourceSelector::ALL {
            assert_eq!(s.as_str().parse::<SourceSelector>().unwrap(), s);
        }
        assert!("bogus".parse::<SourceSelector>().is_err());
    }

    proptest! {
        #[test]
        fn retrieval_prefix_monotone(seed in 0u64..500, k in 1usize..8) {
            let e = HashingEmbedder::new(16);
            let entries: Vec<StoreEntry> = (0..20u64)
                .map(|i| StoreEntry {
                    doc_id: format!("d{i:02}"),
                    vector: e.embed(&format!("w{} w{} w{}", (seed + i) % 5, (seed * i) % 7, i % 3)).unwrap(),
                })
                .collect();
            let store = VectorStore::from_entries(StoreScope::basic(SourceSelector::Issues), 16, entries).unwrap();
            let q = e.embed(&format!("w{} w{}", seed % 5, seed % 7)).unwrap();
            let small = retrieve_vector(&store, &q, k).unwrap();
            let big = retrieve_vector(&store, &q, k + 1).unwrap();
            prop_assert_eq!(&big[..small.len()], &small[..]);
            prop_assert!(small.windows(2).all(|w| w[0].similarity >= w[1].similarity));
            prop_assert_eq!(retrieve_vector(&store, &q, k).unwrap(), small);
        }
    }
}
