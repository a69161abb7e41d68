//! Document corpus: API documentation, issue threads and Q&A pairs for a set
//! of subject projects, mapped onto the APIs they mention and ranked.
//!
//! The corpus is assembled once by [`CorpusBuilder`] and is immutable
//! afterwards, so it can be shared freely between threads.

mod io;
mod matching;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tokens::{longest_prefix_within, TokenCounter};

pub use io::{read_api_records, read_raw_documents, write_jsonl, RawDocument};
pub use matching::{ApiMatcher, MatchRule};

/// Default per-document token budget.
pub const DEFAULT_TOKEN_LIMIT: usize = 5000;

/// Default share of eligible APIs selected as targets.
pub const DEFAULT_TARGET_FRACTION: f64 = 0.10;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("api record {0}: signature and description are both empty")]
    EmptyApiRecord(String),
    #[error("api record {api}: invalid class line span {start}..={end}")]
    InvalidSpan { api: String, start: u32, end: u32 },
    #[error("duplicate api {api} in project {project}")]
    DuplicateApi { project: String, api: String },
    #[error("duplicate document id {0}")]
    DuplicateDocument(String),
    #[error("document {0}: api documentation must come from api records, not raw documents")]
    RawApiDoc(String),
    #[error("no api records for project {0}")]
    NoApis(String),
    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    ApiDoc,
    Issue,
    Qa,
}

impl SourceKind {
    pub const ALL: [SourceKind; 3] = [SourceKind::ApiDoc, SourceKind::Issue, SourceKind::Qa];

    pub fn as_str(self) -> &'static str {
        match self {
            SourceKind::ApiDoc => "api_doc",
            SourceKind::Issue => "issue",
            SourceKind::Qa => "qa",
        }
    }
}

impl fmt::Display for SourceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Inclusive 1-based line range of a class definition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineSpan {
    pub start: u32,
    pub end: u32,
}

impl LineSpan {
    pub fn new(start: u32, end: u32) -> Option<Self> {
        (start >= 1 && start <= end).then_some(LineSpan { start, end })
    }

    pub fn contains(&self, line: u32) -> bool {
        (self.start..=self.end).contains(&line)
    }
}

/// One target API of a subject project.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiRecord {
    pub api_name: String,
    pub project: String,
    pub signature: String,
    pub description: String,
    pub example_code: Option<String>,
    /// Path of the defining source file, relative to the subject package root.
    pub defining_file: String,
    pub class_name: String,
    pub class_line_span: LineSpan,
}

/// A single retrievable document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentChunk {
    pub doc_id: String,
    pub source_kind: SourceKind,
    pub project: String,
    pub title: String,
    pub body: String,
    pub token_count: usize,
    /// Mentioned API names with the rule that linked each one.
    pub mentions: BTreeMap<String, MatchRule>,
}

impl DocumentChunk {
    pub fn mentioned_apis(&self) -> impl Iterator<Item = &str> {
        self.mentions.keys().map(String::as_str)
    }

    pub fn mentions_api(&self, api: &str) -> bool {
        self.mentions.contains_key(api)
    }
}

/// Popularity of an API across issue and Q&A sources.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiRanking {
    pub api_name: String,
    pub issue_count: u64,
    pub qa_count: u64,
    pub harmonic_score: f64,
}

impl ApiRanking {
    pub fn new(api_name: impl Into<String>, issue_count: u64, qa_count: u64) -> Self {
        ApiRanking {
            api_name: api_name.into(),
            issue_count,
            qa_count,
            harmonic_score: harmonic_score(issue_count, qa_count),
        }
    }
}

/// Builds the api documentation chunk for a record.
///
/// The body carries labeled `Signature`, `Description` and (when present)
/// `Example` sections in that order. Empty sections are omitted.
pub fn compose_api_document(
    record: &ApiRecord,
    counter: &dyn TokenCounter,
) -> Result<DocumentChunk, CorpusError> {
    let signature = record.signature.trim();
    let description = record.description.trim();
    if signature.is_empty() && description.is_empty() {
        return Err(CorpusError::EmptyApiRecord(record.api_name.clone()));
    }
    let mut sections = Vec::with_capacity(3);
    if !signature.is_empty() {
        sections.push(format!("Signature:\n{signature}"));
    }
    if !description.is_empty() {
        sections.push(format!("Description:\n{description}"));
    }
    if let Some(example) = record.example_code.as_deref().map(str::trim).filter(|e| !e.is_empty()) {
        sections.push(format!("Example:\n{example}"));
    }
    let body = sections.join("\n\n");
    Ok(DocumentChunk {
        doc_id: format!("api_doc:{}:{}", record.project, record.api_name),
        source_kind: SourceKind::ApiDoc,
        project: record.project.clone(),
        title: record.api_name.clone(),
        token_count: counter.count(&body),
        body,
        mentions: BTreeMap::from([(record.api_name.clone(), MatchRule::Owner)]),
    })
}

/// Composes an issue thread or Q&A pair: title, then the opening post, then
/// every reply in chronological order, each labeled by role.
pub fn compose_thread(raw: &RawDocument, counter: &dyn TokenCounter) -> DocumentChunk {
    let (opening, reply) = match raw.source_kind {
        SourceKind::Qa => ("Question", "Answer"),
        _ => ("Description", "Comment"),
    };
    let mut body = format!("Title: {}\n\n{opening}:\n{}", raw.title.trim(), raw.body.trim());
    for r in &raw.replies {
        body.push_str(&format!("\n\n{reply}:\n{}", r.trim()));
    }
    DocumentChunk {
        doc_id: raw.doc_id.clone(),
        source_kind: raw.source_kind,
        project: raw.project.clone(),
        title: raw.title.clone(),
        token_count: counter.count(&body),
        body,
        mentions: BTreeMap::new(),
    }
}

/// Cuts a document's body to at most `limit` tokens, keeping a prefix.
pub fn truncate_to_budget(doc: &DocumentChunk, limit: usize, counter: &dyn TokenCounter) -> DocumentChunk {
    assert!(limit >= 1, "token limit must be positive");
    if doc.token_count <= limit && counter.count(&doc.body) <= limit {
        return doc.clone();
    }
    let body = longest_prefix_within(counter, &doc.body, limit).to_owned();
    DocumentChunk {
        token_count: counter.count(&body),
        body,
        ..doc.clone()
    }
}

/// Keeps the issue and Q&A documents that mention at least one API and
/// records the mentions. API documentation passes through untouched.
pub fn filter_and_map(docs: Vec<DocumentChunk>, apis: &[ApiRecord]) -> Vec<DocumentChunk> {
    let names: Vec<&str> = apis.iter().map(|a| a.api_name.as_str()).collect();
    let matcher = ApiMatcher::new(&names);
    docs.into_iter()
        .filter_map(|mut doc| {
            if doc.source_kind == SourceKind::ApiDoc {
                return Some(doc);
            }
            let text = format!("{}\n{}", doc.title, doc.body);
            doc.mentions = matcher.find_mentions(&text);
            (!doc.mentions.is_empty()).then_some(doc)
        })
        .collect()
}

/// Harmonic mean of the issue and Q&A counts; zero when either is zero.
pub fn harmonic_score(issue_count: u64, qa_count: u64) -> f64 {
    if issue_count == 0 || qa_count == 0 {
        return 0.0;
    }
    // both operands stay exact in f64 for realistic counts, so the quotient is correctly rounded
    (2 * issue_count * qa_count) as f64 / (issue_count + qa_count) as f64
}

/// Picks the `ceil(fraction * eligible)` best-ranked APIs, where eligible
/// APIs have a positive score. Sorted by score descending, then name.
pub fn select_target_apis(rankings: &[ApiRanking], fraction: f64) -> Vec<String> {
    assert!(fraction > 0.0 && fraction <= 1.0, "fraction must be in (0, 1]");
    let mut eligible: Vec<&ApiRanking> = rankings.iter().filter(|r| r.harmonic_score > 0.0).collect();
    eligible.sort_by(|a, b| {
        b.harmonic_score
            .total_cmp(&a.harmonic_score)
            .then_with(|| a.api_name.cmp(&b.api_name))
    });
    let take = target_count(eligible.len(), fraction);
    eligible.into_iter().take(take).map(|r| r.api_name.clone()).collect()
}

fn target_count(eligible: usize, fraction: f64) -> usize {
    if eligible == 0 {
        return 0;
    }
    // 0.1 * 30 evaluates to 3.0000000000000004 in binary floating point
    let raw = fraction * eligible as f64;
    let n = (raw - 1e-9 * raw.max(1.0)).ceil() as usize;
    n.clamp(1, eligible)
}

/// Immutable, indexed corpus across one or more projects.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Corpus {
    apis: Vec<ApiRecord>,
    docs: Vec<DocumentChunk>,
}

impl Corpus {
    /// Reassembles a corpus from previously built parts.
    pub fn from_parts(mut apis: Vec<ApiRecord>, mut docs: Vec<DocumentChunk>) -> Result<Self, CorpusError> {
        apis.sort_by(|a, b| (&a.project, &a.api_name).cmp(&(&b.project, &b.api_name)));
        if let Some(w) = apis.windows(2).find(|w| (&w[0].project, &w[0].api_name) == (&w[1].project, &w[1].api_name)) {
            return Err(CorpusError::DuplicateApi {
                project: w[0].project.clone(),
                api: w[0].api_name.clone(),
            });
        }
        docs.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));
        if let Some(w) = docs.windows(2).find(|w| w[0].doc_id == w[1].doc_id) {
            return Err(CorpusError::DuplicateDocument(w[0].doc_id.clone()));
        }
        Ok(Corpus { apis, docs })
    }

    pub fn apis(&self) -> &[ApiRecord] {
        &self.apis
    }

    pub fn documents(&self) -> &[DocumentChunk] {
        &self.docs
    }

    pub fn projects(&self) -> BTreeSet<&str> {
        self.apis.iter().map(|a| a.project.as_str()).collect()
    }

    pub fn api(&self, project: &str, api_name: &str) -> Option<&ApiRecord> {
        self.apis.iter().find(|a| a.project == project && a.api_name == api_name)
    }

    pub fn document(&self, doc_id: &str) -> Option<&DocumentChunk> {
        self.docs
            .binary_search_by(|d| d.doc_id.as_str().cmp(doc_id))
            .ok()
            .map(|i| &self.docs[i])
    }

    pub fn documents_of(&self, kind: SourceKind) -> impl Iterator<Item = &DocumentChunk> {
        self.docs.iter().filter(move |d| d.source_kind == kind)
    }

    /// Issue and Q&A mention counts for every API of `project`.
    pub fn rankings(&self, project: &str) -> Vec<ApiRanking> {
        let mut counts: BTreeMap<&str, (u64, u64)> = self
            .apis
            .iter()
            .filter(|a| a.project == project)
            .map(|a| (a.api_name.as_str(), (0, 0)))
            .collect();
        for doc in self.docs.iter().filter(|d| d.project == project) {
            for api in doc.mentioned_apis() {
                if let Some(c) = counts.get_mut(api) {
                    match doc.source_kind {
                        SourceKind::Issue => c.0 += 1,
                        SourceKind::Qa => c.1 += 1,
                        SourceKind::ApiDoc => {}
                    }
                }
            }
        }
        counts
            .into_iter()
            .map(|(api, (issues, qas))| ApiRanking::new(api, issues, qas))
            .collect()
    }
}

/// Single-threaded assembly of a [`Corpus`].
pub struct CorpusBuilder<'c> {
    counter: &'c dyn TokenCounter,
    token_limit: usize,
    apis: Vec<ApiRecord>,
    raw: Vec<RawDocument>,
}

impl<'c> CorpusBuilder<'c> {
    pub fn new(counter: &'c dyn TokenCounter) -> Self {
        CorpusBuilder {
            counter,
            token_limit: DEFAULT_TOKEN_LIMIT,
            apis: Vec::new(),
            raw: Vec::new(),
        }
    }

    pub fn token_limit(mut self, limit: usize) -> Self {
        self.token_limit = limit.max(1);
        self
    }

    pub fn add_apis(&mut self, apis: impl IntoIterator<Item = ApiRecord>) -> &mut Self {
        self.apis.extend(apis);
        self
    }

    pub fn add_documents(&mut self, docs: impl IntoIterator<Item = RawDocument>) -> &mut Self {
        self.raw.extend(docs);
        self
    }

    pub fn build(self) -> Result<Corpus, CorpusError> {
        let mut seen = BTreeSet::new();
        for api in &self.apis {
            if !seen.insert((api.project.as_str(), api.api_name.as_str())) {
                return Err(CorpusError::DuplicateApi {
                    project: api.project.clone(),
                    api: api.api_name.clone(),
                });
            }
        }
        let mut by_project: BTreeMap<&str, Vec<DocumentChunk>> = BTreeMap::new();
        for raw in &self.raw {
            if raw.source_kind == SourceKind::ApiDoc {
                return Err(CorpusError::RawApiDoc(raw.doc_id.clone()));
            }
            let doc = truncate_to_budget(&compose_thread(raw, self.counter), self.token_limit, self.counter);
            by_project.entry(raw.project.as_str()).or_default().push(doc);
        }

        let mut docs = Vec::new();
        for api in &self.apis {
            let doc = compose_api_document(api, self.counter)?;
            docs.push(truncate_to_budget(&doc, self.token_limit, self.counter));
        }
        for (project, project_docs) in by_project {
            let project_apis: Vec<ApiRecord> =
                self.apis.iter().filter(|a| a.project == project).cloned().collect();
            if project_apis.is_empty() {
                return Err(CorpusError::NoApis(project.to_owned()));
            }
            docs.extend(filter_and_map(project_docs, &project_apis));
        }
        docs.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));
        if let Some(w) = docs.windows(2).find(|w| w[0].doc_id == w[1].doc_id) {
            return Err(CorpusError::DuplicateDocument(w[0].doc_id.clone()));
        }
        let mut apis = self.apis;
        apis.sort_by(|a, b| (&a.project, &a.api_name).cmp(&(&b.project, &b.api_name)));
        Ok(Corpus { apis, docs })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokens::CharQuarterCounter;
    use proptest::prelude::*;

    fn record(name: &str) -> ApiRecord {
        ApiRecord {
            api_name: name.into(),
            project: "tf".into(),
            signature: "f(x: int)".into(),
            description: "adds one".into(),
            example_code: None,
            defining_file: "pkg/mod.py".into(),
            class_name: "F".into(),
            class_line_span: LineSpan { start: 1, end: 5 },
        }
    }

    fn thread(id: &str, kind: SourceKind, title: &str, body: &str) -> DocumentChunk {
        compose_thread(
            &RawDocument {
                doc_id: id.into(),
                source_kind: kind,
                project: "tf".into(),
                title: title.into(),
                body: body.into(),
                replies: vec![],
            },
            &CharQuarterCounter,
        )
    }

    #[test]
    fn api_document_sections_in_order() {
        let doc = compose_api_document(&record("m.f"), &CharQuarterCounter).unwrap();
        let sig = doc.body.find("f(x: int)").unwrap();
        let desc = doc.body.find("adds one").unwrap();
        assert!(sig < desc);
        assert_eq!(doc.body.matches(":\n").count(), 2);
        assert_eq!(doc.source_kind, SourceKind::ApiDoc);
        assert_eq!(doc.mentioned_apis().collect::<Vec<_>>(), vec!["m.f"]);

        let mut with_example = record("m.g");
        with_example.example_code = Some("f(1)".into());
        let doc2 = compose_api_document(&with_example, &CharQuarterCounter).unwrap();
        assert_eq!(doc2.body.matches(":\n").count(), 3);
        assert_ne!(doc.doc_id, doc2.doc_id);
    }

    #[test]
    fn api_document_rejects_empty_record() {
        let mut r = record("m.f");
        r.signature.clear();
        r.description = "  ".into();
        assert!(matches!(
            compose_api_document(&r, &CharQuarterCounter),
            Err(CorpusError::EmptyApiRecord(_))
        ));
    }

    #[test]
    fn thread_composition_labels_replies() {
        let raw = RawDocument {
            doc_id: "q1".into(),
            source_kind: SourceKind::Qa,
            project: "tf".into(),
            title: "How?".into(),
            body: "Question text".into(),
            replies: vec!["first".into(), "second".into()],
        };
        let doc = compose_thread(&raw, &CharQuarterCounter);
        assert_eq!(
            doc.body,
            "Title: How?\n\nQuestion:\nQuestion text\n\nAnswer:\nfirst\n\nAnswer:\nsecond"
        );
    }

    #[test]
    fn truncation_cases() {
        let c = CharQuarterCounter;
        let long = thread("i1", SourceKind::Issue, "t", &"word ".repeat(4800));
        assert!(long.token_count > 5000);
        let cut = truncate_to_budget(&long, 5000, &c);
        assert!(cut.token_count <= 5000);
        assert!(long.body.starts_with(&cut.body));
        assert_eq!(truncate_to_budget(&cut, 5000, &c), cut);

        let short = thread("i2", SourceKind::Issue, "t", "tiny");
        assert_eq!(truncate_to_budget(&short, 5000, &c), short);
    }

    #[test]
    fn filter_and_map_examples() {
        let apis = vec![record("tf.data.Dataset"), record("tf.math.add")];
        let docs = vec![
            thread("a", SourceKind::Issue, "map", "call tf.data.Dataset.map here"),
            thread("b", SourceKind::Issue, "nothing", "no api at all"),
            thread("c", SourceKind::Qa, "both", "tf.data.Dataset and tf.math.add"),
        ];
        let kept = filter_and_map(docs, &apis);
        let ids: Vec<_> = kept.iter().map(|d| d.doc_id.as_str()).collect();
        assert_eq!(ids, vec!["a", "c"]);
        assert_eq!(kept[0].mentioned_apis().collect::<Vec<_>>(), vec!["tf.data.Dataset"]);
        assert_eq!(kept[1].mentions.len(), 2);
    }

    #[test]
    fn harmonic_examples() {
        assert_eq!(harmonic_score(4, 4), 4.0);
        assert_eq!(harmonic_score(8, 0), 0.0);
        assert_eq!(harmonic_score(0, 8), 0.0);
        // 2*3*6/(3+6) = 36/9
        assert_eq!(harmonic_score(3, 6), 4.0);
    }

    fn ranks(scores: &[(&str, u64, u64)]) -> Vec<ApiRanking> {
        scores.iter().map(|&(n, i, q)| ApiRanking::new(n, i, q)).collect()
    }

    #[test]
    fn selection_examples() {
        let ten: Vec<ApiRanking> = (1..=10).map(|i| ApiRanking::new(format!("a{i:02}"), i, i)).collect();
        assert_eq!(select_target_apis(&ten, 0.10), vec!["a10"]);

        let twenty: Vec<ApiRanking> = (1..=20).map(|i| ApiRanking::new(format!("a{i:02}"), i, i)).collect();
        assert_eq!(select_target_apis(&twenty, 0.10), vec!["a20", "a19"]);

        let tied = ranks(&[("b.api", 5, 5), ("a.api", 5, 5), ("c", 1, 1)]);
        assert_eq!(select_target_apis(&tied, 0.10), vec!["a.api"]);

        assert!(select_target_apis(&[], 0.10).is_empty());
        // zero-score apis are not eligible
        let zeros = ranks(&[("x", 3, 0), ("y", 0, 0)]);
        assert!(select_target_apis(&zeros, 1.0).is_empty());
    }

    #[test]
    fn selection_count_is_exact_on_float_edge() {
        let thirty: Vec<ApiRanking> = (1..=30).map(|i| ApiRanking::new(format!("a{i:02}"), i, 1)).collect();
        assert_eq!(select_target_apis(&thirty, 0.10).len(), 3);
    }

    #[test]
    fn rankings_count_issue_and_qa_mentions() {
        let mut b = CorpusBuilder::new(&CharQuarterCounter);
        b.add_apis([record("tf.data.Dataset"), record("tf.math.add")]);
        let raw = |id: &str, kind, body: &str| RawDocument {
            doc_id: id.into(),
            source_kind: kind,
            project: "tf".into(),
            title: "t".into(),
            body: body.into(),
            replies: vec![],
        };
        b.add_documents([
            raw("i1", SourceKind::Issue, "tf.data.Dataset"),
            raw("i2", SourceKind::Issue, "tf.data.Dataset tf.math.add"),
            raw("q1", SourceKind::Qa, "tf.data.Dataset"),
            raw("q2", SourceKind::Qa, "unrelated"),
        ]);
        let corpus = b.build().unwrap();
        assert_eq!(corpus.documents().len(), 5);
        assert!(corpus.document("q2").is_none());
        let r = corpus.rankings("tf");
        assert_eq!(r[0].api_name, "tf.data.Dataset");
        assert_eq!((r[0].issue_count, r[0].qa_count), (2, 1));
        assert_eq!((r[1].issue_count, r[1].qa_count), (1, 0));
        assert_eq!(r[1].harmonic_score, 0.0);
    }

    #[test]
    fn builder_rejects_duplicates() {
        let mut b = CorpusBuilder::new(&CharQuarterCounter);
        b.add_apis([record("a.b"), record("a.b")]);
        assert!(matches!(b.build(), Err(CorpusError::DuplicateApi { .. })));
    }

    proptest! {
        #[test]
        fn harmonic_symmetric_and_bounded(a in 0u64..10_000, b in 0u64..10_000) {
            let h = harmonic_score(a, b);
            prop_assert_eq!(h, harmonic_score(b, a));
            prop_assert!(h <= 2.0 * a.min(b) as f64);
            prop_assert_eq!(h == 0.0, a == 0 || b == 0);
            if a == b { prop_assert_eq!(h, a as f64); }
        }

        #[test]
        fn truncation_prefix_idempotent(body in ".{0,400}", limit in 1usize..80) {
            let c = CharQuarterCounter;
            let doc = thread("p", SourceKind::Issue, "t", &body);
            let once = truncate_to_budget(&doc, limit, &c);
            prop_assert!(once.token_count <= limit);
            prop_assert!(once.token_count <= doc.token_count);
            prop_assert!(doc.body.starts_with(&once.body));
            prop_assert_eq!(truncate_to_budget(&once, limit, &c), once.clone());
        }

        #[test]
        fn filter_is_monotone_in_api_population(extra in "[a-z]{1,6}\\.[a-z]{1,6}") {
            let base = vec![record("tf.data.Dataset")];
            let mut grown = base.clone();
            grown.push(record(&extra));
            let docs = vec![
                thread("a", SourceKind::Issue, "x", "use tf.data.Dataset now"),
                thread("b", SourceKind::Qa, "y", "nothing relevant"),
            ];
            let before: BTreeSet<String> = filter_and_map(docs.clone(), &base).into_iter().map(|d| d.doc_id).collect();
            let after: BTreeSet<String> = filter_and_map(docs, &grown).into_iter().map(|d| d.doc_id).collect();
            prop_assert!(before.is_subset(&after));
        }
    }
}
