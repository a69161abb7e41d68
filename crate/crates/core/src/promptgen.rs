//! Prompt materialization: query string, retrieval plan, augmented prompt
//! and test-budget clause.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{ApiRecord, DocumentChunk, SourceKind};
use crate::retrieval::{SourceSelector, StoreScope};
use crate::tokens::TokenCounter;

/// Text of the bundled prompt template.
pub const DEFAULT_TEMPLATE: &str = include_str!("../assets/prompt_template.toml");

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("unknown mode {0:?}")]
    UnknownMode(String),
    #[error("invalid test budget {0:?} (expected unlimited or a positive count)")]
    InvalidBudget(String),
    #[error("template: {0}")]
    Template(String),
    #[error("mode {mode} expects at most {expected} documents, got {got}")]
    DocumentCount { mode: RagMode, expected: usize, got: usize },
    #[error("document {doc_id} ({kind}) does not belong to mode {mode}")]
    ForeignDocument { mode: RagMode, doc_id: String, kind: SourceKind },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One of the nine prompting strategies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RagMode {
    ZeroShot,
    Basic(SourceSelector),
    ApiLevel(SourceSelector),
}

impl RagMode {
    pub const ALL: [RagMode; 9] = [
        RagMode::ZeroShot,
        RagMode::Basic(SourceSelector::ApiDocs),
        RagMode::Basic(SourceSelector::Issues),
        RagMode::Basic(SourceSelector::Qas),
        RagMode::Basic(SourceSelector::Combined),
        RagMode::ApiLevel(SourceSelector::ApiDocs),
        RagMode::ApiLevel(SourceSelector::Issues),
        RagMode::ApiLevel(SourceSelector::Qas),
        RagMode::ApiLevel(SourceSelector::Combined),
    ];

    pub fn selector(self) -> Option<SourceSelector> {
        match self {
            RagMode::ZeroShot => None,
            RagMode::Basic(s) | RagMode::ApiLevel(s) => Some(s),
        }
    }

    pub fn id(self) -> String {
        match self {
            RagMode::ZeroShot => "zero_shot".into(),
            RagMode::Basic(s) => format!("basic_{s}"),
            RagMode::ApiLevel(s) => format!("api_level_{s}"),
        }
    }
}

impl fmt::Display for RagMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.id())
    }
}

impl FromStr for RagMode {
    type Err = PromptError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        RagMode::ALL
            .into_iter()
            .find(|m| m.id() == s)
            .ok_or_else(|| PromptError::UnknownMode(s.to_owned()))
    }
}

impl Serialize for RagMode {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.id())
    }
}

impl<'de> Deserialize<'de> for RagMode {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// Cap on the number of test cases requested.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TestBudget {
    Unlimited,
    Fixed(u32),
}

impl TestBudget {
    /// The budgets compared in cost studies.
    pub const STUDY: [TestBudget; 4] = [
        TestBudget::Unlimited,
        TestBudget::Fixed(1),
        TestBudget::Fixed(3),
        TestBudget::Fixed(6),
    ];

    pub fn fixed(n: u32) -> Result<Self, PromptError> {
        if n == 0 {
            return Err(PromptError::InvalidBudget(n.to_string()));
        }
        Ok(TestBudget::Fixed(n))
    }

    pub fn limit(self) -> Option<u32> {
        match self {
            TestBudget::Unlimited => None,
            TestBudget::Fixed(n) => Some(n),
        }
    }
}

impl fmt::Display for TestBudget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TestBudget::Unlimited => f.write_str("unlimited"),
            TestBudget::Fixed(n) => write!(f, "{n}"),
        }
    }
}

impl FromStr for TestBudget {
    type Err = PromptError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "unlimited" {
            return Ok(TestBudget::Unlimited);
        }
        s.parse::<u32>()
            .ok()
            .filter(|n| *n > 0)
            .map(TestBudget::Fixed)
            .ok_or_else(|| PromptError::InvalidBudget(s.to_owned()))
    }
}

impl Serialize for TestBudget {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for TestBudget {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Text(String),
            Count(u32),
        }
        match Repr::deserialize(d)? {
            Repr::Text(t) => t.parse().map_err(serde::de::Error::custom),
            Repr::Count(n) => TestBudget::fixed(n).map_err(serde::de::Error::custom),
        }
    }
}

/// Versioned prompt wording with named placeholders.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub version: String,
    pub query: String,
    pub coverage_instruction: String,
    pub runnable_instruction: String,
    pub document: String,
    pub budget_clause: String,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        PromptTemplate::parse(DEFAULT_TEMPLATE).expect("bundled prompt template is valid")
    }
}

impl PromptTemplate {
    pub fn parse(text: &str) -> Result<Self, PromptError> {
        let t: PromptTemplate = toml::from_str(text).map_err(|e| PromptError::Template(e.to_string()))?;
        let required = [
            (&t.query, "query", "{API_NAME}"),
            (&t.query, "query", "{ML_LIB}"),
            (&t.document, "document", "{DOCS}"),
            (&t.budget_clause, "budget_clause", "{N_TESTS}"),
        ];
        for (field, name, placeholder) in required {
            if !field.contains(placeholder) {
                return Err(PromptError::Template(format!("{name} lacks {placeholder}")));
            }
        }
        Ok(t)
    }

    pub fn load(path: &Path) -> Result<Self, PromptError> {
        PromptTemplate::parse(&std::fs::read_to_string(path)?)
    }

    pub fn render_query(&self, api_name: &str, library_name: &str) -> String {
        substitute(&self.query, &[("API_NAME", api_name), ("ML_LIB", library_name)])
    }
}

/// Single-pass placeholder substitution: inserted values are never rescanned.
fn substitute(text: &str, values: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let tail = &rest[open..];
        let hit = values.iter().find(|(name, _)| {
            tail.strip_prefix('{')
                .and_then(|t| t.strip_prefix(name))
                .is_some_and(|t| t.starts_with('}'))
        });
        match hit {
            Some((name, value)) => {
                out.push_str(value);
                rest = &tail[name.len() + 2..];
            }
            None => {
                out.push('{');
                rest = &tail[1..];
            }
        }
    }
    out.push_str(rest);
    out
}

/// The retrieval query: the first sentence of the zero-shot prompt.
pub fn build_query(api_name: &str, library_name: &str) -> String {
    PromptTemplate::default().render_query(api_name, library_name)
}

/// One retrieval step: which store to search and how many documents to take.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanStep {
    pub scope: StoreScope,
    pub k: usize,
}

/// Documents taken per retrieval step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrievalDepths {
    pub basic: usize,
    pub api_docs: usize,
    pub issues: usize,
    pub qas: usize,
    /// Per source in the API-level combined mode.
    pub combined_per_source: usize,
}

impl Default for RetrievalDepths {
    fn default() -> Self {
        RetrievalDepths {
            basic: 3,
            api_docs: 1,
            issues: 3,
            qas: 3,
            combined_per_source: 1,
        }
    }
}

/// Stores and document counts a mode retrieves from.
pub fn retrieval_plan(mode: RagMode, api_name: &str) -> Vec<PlanStep> {
    retrieval_plan_with(mode, api_name, &RetrievalDepths::default())
}

pub fn retrieval_plan_with(mode: RagMode, api_name: &str, depths: &RetrievalDepths) -> Vec<PlanStep> {
    let step = |scope, k| PlanStep { scope, k };
    match mode {
        RagMode::ZeroShot => Vec::new(),
        RagMode::Basic(sel) => vec![step(StoreScope::basic(sel), depths.basic)],
        RagMode::ApiLevel(SourceSelector::ApiDocs) => {
            vec![step(StoreScope::api_level(api_name, SourceSelector::ApiDocs), depths.api_docs)]
        }
        RagMode::ApiLevel(SourceSelector::Issues) => {
            vec![step(StoreScope::api_level(api_name, SourceSelector::Issues), depths.issues)]
        }
        RagMode::ApiLevel(SourceSelector::Qas) => {
            vec![step(StoreScope::api_level(api_name, SourceSelector::Qas), depths.qas)]
        }
        RagMode::ApiLevel(SourceSelector::Combined) => [SourceSelector::ApiDocs, SourceSelector::Issues, SourceSelector::Qas]
            .into_iter()
            .map(|sel| step(StoreScope::api_level(api_name, sel), depths.combined_per_source))
            .collect(),
    }
}

pub fn planned_document_count(mode: RagMode) -> usize {
    planned_document_count_with(mode, &RetrievalDepths::default())
}

pub fn planned_document_count_with(mode: RagMode, depths: &RetrievalDepths) -> usize {
    retrieval_plan_with(mode, "_", depths).iter().map(|s| s.k).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptSpec {
    pub api_name: String,
    pub project: String,
    pub mode: RagMode,
    pub budget: TestBudget,
    pub query: String,
    pub augmented_docs: Vec<DocumentChunk>,
    pub final_text: String,
    pub template_version: String,
}

fn source_order(kind: SourceKind) -> u8 {
    match kind {
        SourceKind::ApiDoc => 0,
        SourceKind::Issue => 1,
        SourceKind::Qa => 2,
    }
}

fn render(
    template: &PromptTemplate,
    query: &str,
    docs: &[DocumentChunk],
    budget: TestBudget,
) -> String {
    let mut sections = vec![
        query.to_owned(),
        template.coverage_instruction.clone(),
        template.runnable_instruction.clone(),
    ];
    for (i, doc) in docs.iter().enumerate() {
        let labeled = format!("Document {} ({}):\n{}", i + 1, doc.source_kind, doc.body);
        sections.push(substitute(&template.document, &[("DOCS", &labeled)]));
    }
    if let TestBudget::Fixed(n) = budget {
        sections.push(substitute(&template.budget_clause, &[("N_TESTS", &n.to_string())]));
    }
    sections.join("\n\n")
}

/// Assembles the final prompt for one API.
///
/// `docs` arrive in retrieval order; in combined modes they are regrouped
/// by source (api docs, issues, Q&As) keeping retrieval order within each
/// source. Fewer documents than planned are accepted (sparse stores).
pub fn build_prompt(
    api: &ApiRecord,
    library_name: &str,
    mode: RagMode,
    docs: Vec<DocumentChunk>,
    budget: TestBudget,
    template: &PromptTemplate,
) -> Result<PromptSpec, PromptError> {
    build_prompt_with(api, library_name, mode, docs, budget, template, &RetrievalDepths::default())
}

/// [`build_prompt`] with non-default retrieval depths.
pub fn build_prompt_with(
    api: &ApiRecord,
    library_name: &str,
    mode: RagMode,
    mut docs: Vec<DocumentChunk>,
    budget: TestBudget,
    template: &PromptTemplate,
    depths: &RetrievalDepths,
) -> Result<PromptSpec, PromptError> {
    let expected = planned_document_count_with(mode, depths);
    if docs.len() > expected {
        return Err(PromptError::DocumentCount {
            mode,
            expected,
            got: docs.len(),
        });
    }
    if let Some(sel) = mode.selector() {
        for doc in &docs {
            let linked = matches!(mode, RagMode::Basic(_)) || doc.mentions_api(&api.api_name);
            if !sel.admits(doc.source_kind) || !linked {
                return Err(PromptError::ForeignDocument {
                    mode,
                    doc_id: doc.doc_id.clone(),
                    kind: doc.source_kind,
                });
            }
        }
        if mode == RagMode::ApiLevel(SourceSelector::Combined) {
            for kind in SourceKind::ALL {
                let n = docs.iter().filter(|d| d.source_kind == kind).count();
                if n > depths.combined_per_source {
                    return Err(PromptError::DocumentCount {
                        mode,
                        expected: depths.combined_per_source,
                        got: n,
                    });
                }
            }
        }
        if sel == SourceSelector::Combined {
            docs.sort_by_key(|d| source_order(d.source_kind));
        }
    }
    let query = template.render_query(&api.api_name, library_name);
    let final_text = render(template, &query, &docs, budget);
    Ok(PromptSpec {
        api_name: api.api_name.clone(),
        project: api.project.clone(),
        mode,
        budget,
        query,
        augmented_docs: docs,
        final_text,
        template_version: template.version.clone(),
    })
}

impl PromptSpec {
    /// Drops trailing documents whole until the prompt fits `max_tokens`.
    /// Returns the number of documents dropped.
    pub fn fit_to_window(&mut self, template: &PromptTemplate, max_tokens: usize, counter: &dyn TokenCounter) -> usize {
        let mut dropped = 0;
        while counter.count(&self.final_text) > max_tokens && !self.augmented_docs.is_empty() {
            self.augmented_docs.pop();
            dropped += 1;
            self.final_text = render(template, &self.query, &self.augmented_docs, self.budget);
        }
        dropped
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{compose_api_document, LineSpan, MatchRule};
    use crate::tokens::CharQuarterCounter;
    use std::collections::BTreeMap;

    fn api() -> ApiRecord {
        ApiRecord {
            api_name: "tf.data.Dataset".into(),
            project: "tf".into(),
            signature: "Dataset()".into(),
            description: "A dataset.".into(),
            example_code: None,
            defining_file: "tf/data.py".into(),
            class_name: "Dataset".into(),
            class_line_span: LineSpan { start: 1, end: 10 },
        }
    }

    fn doc(id: &str, kind: SourceKind, body: &str) -> DocumentChunk {
        DocumentChunk {
            doc_id: id.into(),
            source_kind: kind,
            project: "tf".into(),
            title: id.into(),
            body: body.into(),
            token_count: CharQuarterCounter.count(body),
            mentions: BTreeMap::from([("tf.data.Dataset".to_string(), MatchRule::FullName)]),
        }
    }

    #[test]
    fn query_matches_template_sentence() {
        assert_eq!(
            build_query("tf.data.Dataset", "tensorflow"),
            "Generate a python unit test case to test the functionality of tf.data.Dataset in tensorflow library with maximum coverage."
        );
        assert_eq!(build_query("a", "b"), build_query("a", "b"));
        // placeholder text inside names is not re-substituted
        assert!(build_query("{ML_LIB}", "x").contains("of {ML_LIB} in x library"));
    }

    #[test]
    fn plans_follow_retrieval_counts() {
        assert_eq!(
            retrieval_plan(RagMode::Basic(SourceSelector::Issues), "a"),
            vec![PlanStep { scope: StoreScope::basic(SourceSelector::Issues), k: 3 }]
        );
        let combined = retrieval_plan(RagMode::ApiLevel(SourceSelector::Combined), "a");
        assert_eq!(combined.len(), 3);
        assert!(combined.iter().all(|s| s.k == 1));
        assert_eq!(combined[0].scope, StoreScope::api_level("a", SourceSelector::ApiDocs));
        assert_eq!(combined[2].scope, StoreScope::api_level("a", SourceSelector::Qas));
        assert!(retrieval_plan(RagMode::ZeroShot, "a").is_empty());

        let counts: Vec<usize> = RagMode::ALL.iter().map(|m| planned_document_count(*m)).collect();
        assert_eq!(counts, vec![0, 3, 3, 3, 3, 1, 3, 3, 3]);
    }

    #[test]
    fn zero_shot_prompt_has_no_documents() {
        let p = build_prompt(&api(), "tensorflow", RagMode::ZeroShot, vec![], TestBudget::Unlimited, &PromptTemplate::default()).unwrap();
        assert!(!p.final_text.contains("Document 1"));
        assert!(p.final_text.starts_with(&p.query));
        assert!(!p.final_text.contains("exactly"));
        let err = build_prompt(
            &api(),
            "tensorflow",
            RagMode::ZeroShot,
            vec![doc("i1", SourceKind::Issue, "x")],
            TestBudget::Unlimited,
            &PromptTemplate::default(),
        );
        assert!(matches!(err, Err(PromptError::DocumentCount { .. })));
    }

    #[test]
    fn augmented_prompt_keeps_retrieval_order() {
        let docs = vec![
            doc("q3", SourceKind::Qa, "third body"),
            doc("q1", SourceKind::Qa, "first body"),
            doc("q2", SourceKind::Qa, "second body"),
        ];
        let p = build_prompt(&api(), "tensorflow", RagMode::Basic(SourceSelector::Qas), docs, TestBudget::Unlimited, &PromptTemplate::default()).unwrap();
        let t = &p.final_text;
        let pos: Vec<usize> = ["third body", "first body", "second body"].iter().map(|s| t.find(s).unwrap()).collect();
        assert!(pos[0] < pos[1] && pos[1] < pos[2]);
        assert_eq!(t.matches("Use the provided document").count(), 3);
        assert!(t.contains("Document 3 (qa):\nsecond body"));
    }

    #[test]
    fn combined_modes_group_by_source() {
        let docs = vec![
            doc("q1", SourceKind::Qa, "qa body"),
            doc("i1", SourceKind::Issue, "issue body"),
            compose_api_document(&api(), &CharQuarterCounter).unwrap(),
        ];
        let p = build_prompt(&api(), "tensorflow", RagMode::ApiLevel(SourceSelector::Combined), docs, TestBudget::Unlimited, &PromptTemplate::default()).unwrap();
        let kinds: Vec<_> = p.augmented_docs.iter().map(|d| d.source_kind).collect();
        assert_eq!(kinds, vec![SourceKind::ApiDoc, SourceKind::Issue, SourceKind::Qa]);
    }

    #[test]
    fn rejects_wrong_sources() {
        let err = build_prompt(
            &api(),
            "tensorflow",
            RagMode::Basic(SourceSelector::Issues),
            vec![doc("q1", SourceKind::Qa, "x")],
            TestBudget::Unlimited,
            &PromptTemplate::default(),
        );
        assert!(matches!(err, Err(PromptError::ForeignDocument { .. })));
        let err = build_prompt(
            &api(),
            "tensorflow",
            RagMode::ApiLevel(SourceSelector::ApiDocs),
            vec![doc("a", SourceKind::ApiDoc, "x"), doc("b", SourceKind::ApiDoc, "y")],
            TestBudget::Unlimited,
            &PromptTemplate::default(),
        );
        assert!(matches!(err, Err(PromptError::DocumentCount { expected: 1, got: 2, .. })));
    }

    #[test]
    fn budget_clause_iff_fixed() {
        let t = PromptTemplate::default();
        let fixed = build_prompt(&api(), "tensorflow", RagMode::ZeroShot, vec![], TestBudget::Fixed(3), &t).unwrap();
        assert!(fixed.final_text.ends_with("Generate exactly 3 unit test cases."));
        for b in TestBudget::STUDY {
            let p = build_prompt(&api(), "tensorflow", RagMode::ZeroShot, vec![], b, &t).unwrap();
            assert_eq!(p.final_text.contains("Generate exactly"), b != TestBudget::Unlimited);
            assert!(p.final_text.contains(&p.query));
        }
    }

    #[test]
    fn window_guard_drops_whole_trailing_documents() {
        let t = PromptTemplate::default();
        let docs = vec![
            doc("i1", SourceKind::Issue, &"a".repeat(400)),
            doc("i2", SourceKind::Issue, &"b".repeat(400)),
        ];
        let mut p = build_prompt(&api(), "tensorflow", RagMode::Basic(SourceSelector::Issues), docs, TestBudget::Unlimited, &t).unwrap();
        let full = CharQuarterCounter.count(&p.final_text);
        let dropped = p.fit_to_window(&t, full - 50, &CharQuarterCounter);
        assert_eq!(dropped, 1);
        assert_eq!(p.augmented_docs.len(), 1);
        assert!(p.final_text.contains(&"a".repeat(400)));
        assert!(!p.final_text.contains('b'.to_string().repeat(400).as_str()));
    }

    #[test]
    fn template_validation() {
        assert!(PromptTemplate::parse("version = \"x\"").is_err());
        let bad = DEFAULT_TEMPLATE.replace("{DOCS}", "");
        assert!(matches!(PromptTemplate::parse(&bad), Err(PromptError::Template(_))));
    }

    #[test]
    fn mode_and_budget_parse() {
        for m in RagMode::ALL {
            assert_eq!(m.id().parse::<RagMode>().unwrap(), m);
        }
        assert_eq!(RagMode::ALL.len(), 9);
        assert_eq!("6".parse::<TestBudget>().unwrap(), TestBudget::Fixed(6));
        assert!("0".parse::<TestBudget>().is_err());
        assert_eq!(serde_json::to_string(&TestBudget::Unlimited).unwrap(), "\"unlimited\"");
        assert_eq!(serde_json::from_str::<TestBudget>("3").unwrap(), TestBudget::Fixed(3));
    }
}
