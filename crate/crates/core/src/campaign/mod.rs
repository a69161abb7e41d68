//! Full campaigns from one config file: ingest, rank, build stores,
//! generate, execute, evaluate and report.
//!
//! Every stage output is keyed by a fingerprint of its inputs and recorded
//! in an append-only manifest, so an interrupted or repeated campaign only
//! recomputes what changed. Generation and execution run per cell
//! (api, model, mode, budget) on a bounded thread pool; a failing cell is
//! reported and does not affect the others.
//!
//! Output layout under `output_root`:
//!
//! ```text
//! manifest.jsonl
//! corpus/<project>/{apis.json,documents.jsonl,rankings.json}
//! stores/<project>/<store id>.jsonl
//! generations/<model>/<project>/<mode>/<budget>/<api>.json
//! suites/<model>/<project>/<mode>/<budget>/<api>.py
//! runs/<model>/<project>/<mode>/<budget>/<api>/{suite.py,log.txt,coverage.json,outcome.json}
//! evaluations/<model>/<project>/<mode>/<budget>/<api>.json
//! reports/
//! ```

pub mod config;
pub mod manifest;
mod report;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::{
    read_api_records, read_raw_documents, select_target_apis, write_jsonl, ApiRanking, ApiRecord, Corpus, CorpusBuilder, CorpusError, DocumentChunk,
    SourceKind,
};
use crate::executor::{measure_class_coverage, run_suite, EnvConfig, ExecError, ExecutionOutcome};
use crate::llmclient::{
    complete_with_retry, ChatProvider, ChatRequest, CostRecord, MockFixtures, MockProvider, OpenAiCompatProvider,
    ProviderError, RetryPolicy,
};
use crate::metrics::{metric_rows, CellEvaluation, MetricRow, SuiteTally};
use crate::promptgen::{build_prompt_with, retrieval_plan_with, PromptError, PromptSpec, PromptTemplate};
use crate::pytool::{PyToolError, PythonTool};
use crate::retrieval::{build_store, retrieve, Embedder, HashingEmbedder, RetrievalError, StoreScope, VectorStore};
use crate::testsuite::{CellKey, ExtractOptions, GeneratedSuite};
use crate::tokens::{CharQuarterCounter, TokenCounter};

pub use config::{CampaignConfig, ProjectConfig, ProviderConfig};
pub use manifest::{ManifestEvent, RunManifest};
pub use report::MissingCell;

#[derive(Debug, Error)]
pub enum CampaignError {
    #[error("{path}: {message}")]
    Config { path: String, message: String },
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Invalid(Vec<String>),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Tool(#[from] PyToolError),
    #[error("report: {0}")]
    Report(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Pipeline stages in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Ingest,
    Rank,
    BuildStores,
    Generate,
    Execute,
    Evaluate,
    Report,
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Recompute every stage even when the manifest says it is current.
    pub force: bool,
    pub retry: RetryPolicy,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellFailure {
    pub run_id: String,
    pub stage: String,
    pub error: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CampaignSummary {
    pub cells: usize,
    pub generated: usize,
    pub generation_reused: usize,
    pub executed: usize,
    pub execution_reused: usize,
    pub failures: Vec<CellFailure>,
    pub reports: Vec<PathBuf>,
}

impl CampaignSummary {
    /// 0 when every cell completed, 2 when some failed.
    pub fn exit_code(&self) -> i32 {
        if self.failures.is_empty() { 0 } else { 2 }
    }
}

/// Everything persisted about one generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub cell: CellKey,
    pub prompt: PromptSpec,
    pub response_text: String,
    pub provider_id: String,
    pub cost: CostRecord,
    pub suite: GeneratedSuite,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRecord {
    pub evaluation: CellEvaluation,
    pub outcome: Option<ExecutionOutcome>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RankingFile {
    fraction: f64,
    rankings: Vec<ApiRanking>,
    targets: Vec<String>,
}

fn fingerprint(parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    hex::encode(h.finalize())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CampaignError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CampaignError> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

/// Hash of every `.py` file under `root`, by relative path and content.
fn tree_fingerprint(root: &Path) -> std::io::Result<String> {
    fn walk(dir: &Path, out: &mut Vec<PathBuf>) -> std::io::Result<()> {
        for entry in fs::read_dir(dir)? {
            let path = entry?.path();
            if path.is_dir() {
                if path.file_name().is_some_and(|n| n != "__pycache__") {
                    walk(&path, out)?;
                }
            } else if path.extension().is_some_and(|e| e == "py") {
                out.push(path);
            }
        }
        Ok(())
    }
    let mut files = Vec::new();
    walk(root, &mut files)?;
    files.sort();
    let mut h = Sha256::new();
    for f in files {
        h.update(f.strip_prefix(root).unwrap_or(&f).to_string_lossy().as_bytes());
        h.update(fs::read(&f)?);
    }
    Ok(hex::encode(h.finalize()))
}

fn python_version(python: &Path) -> String {
    std::process::Command::new(python)
        .arg("--version")
        .output()
        .map(|o| {
            let text = if o.stdout.is_empty() { o.stderr } else { o.stdout };
            String::from_utf8_lossy(&text).trim().to_owned()
        })
        .unwrap_or_else(|_| "unknown".into())
}

struct ProjectState {
    name: String,
    library_name: String,
    corpus: Corpus,
    targets: Vec<ApiRecord>,
    stores: BTreeMap<StoreScope, VectorStore>,
    fingerprint: String,
}

struct CellOutcome {
    evaluation: Option<CellEvaluation>,
    cost: Option<CostRecord>,
    generated: bool,
    executed: bool,
    failure: Option<CellFailure>,
}

pub struct Campaign {
    config: CampaignConfig,
    options: RunOptions,
    tool: PythonTool,
    counter: Arc<dyn TokenCounter>,
    embedder: HashingEmbedder,
    template: PromptTemplate,
    template_text: String,
    provider: Box<dyn ChatProvider>,
    provider_fingerprint: String,
    manifest: RunManifest,
    subject_fingerprint: String,
}

impl Campaign {
    /// Prepares a campaign with the provider named in the config.
    pub fn open(config: CampaignConfig, options: RunOptions) -> Result<Self, CampaignError> {
        config.validate()?;
        let counter: Arc<dyn TokenCounter> = Arc::new(CharQuarterCounter);
        let (provider, provider_fingerprint): (Box<dyn ChatProvider>, String) = match &config.provider {
            ProviderConfig::Mock { fixtures } => {
                let (fx, bytes) = match fixtures {
                    Some(path) => (MockFixtures::load(path)?, fs::read(path)?),
                    None => (MockFixtures::default(), Vec::new()),
                };
                let fp = format!("mock:{}", fingerprint(&[&bytes]));
                (Box::new(MockProvider::new(fx, counter.clone())), fp)
            }
            ProviderConfig::Http(http) => {
                let p = OpenAiCompatProvider::new(http.clone(), counter.clone())?;
                let fp = p.id();
                (Box::new(p), fp)
            }
        };
        Campaign::with_provider(config, options, provider, provider_fingerprint)
    }

    /// Prepares a campaign around a caller-supplied provider. The
    /// fingerprint must change whenever the provider's answers could.
    pub fn with_provider(
        config: CampaignConfig,
        options: RunOptions,
        provider: Box<dyn ChatProvider>,
        provider_fingerprint: String,
    ) -> Result<Self, CampaignError> {
        config.validate()?;
        let template_text = match &config.template {
            Some(p) => fs::read_to_string(p)?,
            None => crate::promptgen::DEFAULT_TEMPLATE.to_owned(),
        };
        let template = PromptTemplate::parse(&template_text)?;
        fs::create_dir_all(&config.output_root)?;
        let manifest = RunManifest::open(&config.output_root.join("manifest.jsonl"))?;
        let python = config.python.clone().unwrap_or_else(crate::pytool::default_python);
        let subject_fingerprint = tree_fingerprint(&config.subject_root)?;
        let config_hash = fingerprint(&[serde_json::to_string(&config)?.as_bytes()]);
        manifest.started(&config_hash, &python_version(&python), &subject_fingerprint, config.max_output_tokens)?;
        Ok(Campaign {
            tool: PythonTool::new(python),
            counter: Arc::new(CharQuarterCounter),
            embedder: HashingEmbedder::default(),
            template,
            template_text,
            provider,
            provider_fingerprint,
            manifest,
            subject_fingerprint,
            config,
            options,
        })
    }

    pub fn config(&self) -> &CampaignConfig {
        &self.config
    }

    pub fn manifest(&self) -> &RunManifest {
        &self.manifest
    }

    fn out(&self, parts: &[&str]) -> PathBuf {
        parts.iter().fold(self.config.output_root.clone(), |p, s| p.join(s))
    }

    fn current(&self, stage: &str, key: &str, fp: &str, artifacts: &[&Path]) -> bool {
        !self.options.force && self.manifest.is_complete(stage, key, fp) && artifacts.iter().all(|p| p.exists())
    }

    fn ingest(&self, p: &ProjectConfig) -> Result<(Corpus, String), CampaignError> {
        let fp = fingerprint(&[
            b"ingest",
            p.name.as_bytes(),
            &fs::read(&p.apis)?,
            &fs::read(&p.issues)?,
            &fs::read(&p.qas)?,
            &self.config.token_limit.to_le_bytes(),
        ]);
        let apis_path = self.out(&["corpus", &p.name, "apis.json"]);
        let docs_path = self.out(&["corpus", &p.name, "documents.jsonl"]);
        if self.current("ingest", &p.name, &fp, &[&apis_path, &docs_path]) {
            let apis: Vec<ApiRecord> = read_json(&apis_path)?;
            let docs = fs::read_to_string(&docs_path)?
                .lines()
                .map(serde_json::from_str::<DocumentChunk>)
                .collect::<Result<Vec<_>, _>>()?;
            return Ok((Corpus::from_parts(apis, docs)?, fp));
        }
        let apis = read_api_records(&p.apis)?;
        let mut raw = read_raw_documents(&p.issues, Some(SourceKind::Issue))?;
        raw.extend(read_raw_documents(&p.qas, Some(SourceKind::Qa))?);
        let mut problems: Vec<String> = apis
            .iter()
            .filter(|a| a.project != p.name)
            .map(|a| format!("{}: api {} belongs to project {}", p.apis.display(), a.api_name, a.project))
            .collect();
        problems.extend(
            raw.iter()
                .filter(|d| d.project != p.name)
                .map(|d| format!("document {} belongs to project {}, not {}", d.doc_id, d.project, p.name)),
        );
        if !problems.is_empty() {
            return Err(CampaignError::Invalid(problems));
        }
        let mut builder = CorpusBuilder::new(&*self.counter).token_limit(self.config.token_limit);
        builder.add_apis(apis).add_documents(raw);
        let corpus = builder.build()?;
        write_json(&apis_path, &corpus.apis())?;
        write_jsonl(&docs_path, corpus.documents())?;
        self.manifest.completed("ingest", &p.name, &fp)?;
        Ok((corpus, fp))
    }

    fn rank(&self, p: &ProjectConfig, corpus: &Corpus, ingest_fp: &str) -> Result<(Vec<ApiRecord>, String), CampaignError> {
        let fp = fingerprint(&[b"rank", ingest_fp.as_bytes(), &self.config.fraction.to_le_bytes()]);
        let path = self.out(&["corpus", &p.name, "rankings.json"]);
        let targets = if self.current("rank", &p.name, &fp, &[&path]) {
            read_json::<RankingFile>(&path)?.targets
        } else {
            let rankings = corpus.rankings(&p.name);
            let targets = select_target_apis(&rankings, self.config.fraction);
            if targets.is_empty() {
                log::warn!("project {}: no api is mentioned in both issues and Q&As", p.name);
            }
            write_json(
                &path,
                &RankingFile {
                    fraction: self.config.fraction,
                    rankings,
                    targets: targets.clone(),
                },
            )?;
            self.manifest.completed("rank", &p.name, &fp)?;
            targets
        };
        let records = targets
            .iter()
            .filter_map(|t| corpus.api(&p.name, t).cloned())
            .collect();
        Ok((records, fp))
    }

    fn build_stores(
        &self,
        p: &ProjectConfig,
        corpus: &Corpus,
        targets: &[ApiRecord],
        rank_fp: &str,
    ) -> Result<(BTreeMap<StoreScope, VectorStore>, String), CampaignError> {
        let scopes: BTreeSet<StoreScope> = targets
            .iter()
            .flat_map(|api| {
                self.config
                    .modes
                    .iter()
                    .flat_map(|m| retrieval_plan_with(*m, &api.api_name, &self.config.retrieval_k))
            })
            .map(|step| step.scope)
            .collect();
        let scope_ids: Vec<String> = scopes.iter().map(StoreScope::store_id).collect();
        let fp = fingerprint(&[
            b"stores",
            rank_fp.as_bytes(),
            self.embedder.id().as_bytes(),
            scope_ids.join("\n").as_bytes(),
        ]);
        let paths: Vec<PathBuf> = scope_ids
            .iter()
            .map(|id| self.out(&["stores", &p.name, &format!("{id}.jsonl")]))
            .collect();
        let path_refs: Vec<&Path> = paths.iter().map(PathBuf::as_path).collect();
        let reuse = self.current("stores", &p.name, &fp, &path_refs);
        if !reuse {
            fs::create_dir_all(self.out(&["stores", &p.name]))?;
        }
        let mut stores = BTreeMap::new();
        for (scope, path) in scopes.into_iter().zip(&paths) {
            let store = if reuse {
                VectorStore::load(path)?
            } else {
                let s = build_store(corpus, scope.clone(), &self.embedder)?;
                s.save(path)?;
                s
            };
            stores.insert(scope, store);
        }
        if !reuse {
            self.manifest.completed("stores", &p.name, &fp)?;
        }
        Ok((stores, fp))
    }

    fn prepare(&self, until: Stage) -> Result<Vec<ProjectState>, CampaignError> {
        let mut states = Vec::new();
        for p in &self.config.projects {
            let (corpus, ingest_fp) = self.ingest(p)?;
            let (targets, mut fp) = if until >= Stage::Rank {
                self.rank(p, &corpus, &ingest_fp)?
            } else {
                (Vec::new(), ingest_fp)
            };
            let mut stores = BTreeMap::new();
            if until >= Stage::BuildStores {
                (stores, fp) = self.build_stores(p, &corpus, &targets, &fp)?;
            }
            states.push(ProjectState {
                name: p.name.clone(),
                library_name: p.library_name.clone(),
                corpus,
                targets,
                stores,
                fingerprint: fp,
            });
        }
        Ok(states)
    }

    fn cell_keys<'s>(&self, states: &'s [ProjectState]) -> Vec<(&'s ProjectState, &'s ApiRecord, CellKey)> {
        let mut cells = Vec::new();
        for state in states {
            for api in &state.targets {
                for model in &self.config.models {
                    for mode in &self.config.modes {
                        for budget in &self.config.budgets {
                            cells.push((
                                state,
                                api,
                                CellKey {
                                    model_id: model.clone(),
                                    project: state.name.clone(),
                                    mode: *mode,
                                    budget: *budget,
                                    api_name: api.api_name.clone(),
                                },
                            ));
                        }
                    }
                }
            }
        }
        cells
    }

    fn generate(&self, state: &ProjectState, api: &ApiRecord, key: &CellKey) -> Result<GenerationRecord, CampaignError> {
        let query = self.template.render_query(&api.api_name, &state.library_name);
        let mut docs = Vec::new();
        for step in retrieval_plan_with(key.mode, &api.api_name, &self.config.retrieval_k) {
            let store = state
                .stores
                .get(&step.scope)
                .ok_or_else(|| CampaignError::Report(format!("store {} was not built", step.scope.store_id())))?;
            for hit in retrieve(store, &self.embedder, &query, step.k)? {
                let doc = state
                    .corpus
                    .document(&hit.doc_id)
                    .ok_or_else(|| CampaignError::Report(format!("store references unknown document {}", hit.doc_id)))?;
                docs.push(doc.clone());
            }
        }
        let prompt = build_prompt_with(
            api,
            &state.library_name,
            key.mode,
            docs,
            key.budget,
            &self.template,
            &self.config.retrieval_k,
        )?;
        let mut request = ChatRequest::new(&key.model_id, &prompt.final_text);
        request.max_output_tokens = self.config.max_output_tokens;
        let response = complete_with_retry(self.provider.as_ref(), &request, self.options.retry)
            .map_err(|f| CampaignError::Provider(f.last))?;
        let options = ExtractOptions {
            prose_fallback: self.config.prose_fallback,
        };
        let suite = GeneratedSuite::from_response(key.clone(), &response.text, &self.tool, options)?;
        Ok(GenerationRecord {
            cell: key.clone(),
            cost: CostRecord {
                api_name: api.api_name.clone(),
                model_id: key.model_id.clone(),
                mode: key.mode,
                budget: key.budget,
                input_tokens: response.usage.input_tokens,
                output_tokens: response.usage.output_tokens,
            },
            prompt,
            response_text: response.text,
            provider_id: response.provider_id,
            suite,
        })
    }

    fn execute(&self, api: &ApiRecord, suite: &GeneratedSuite) -> Result<EvaluationRecord, ExecError> {
        let (tally, outcome, coverage) = if suite.parse_ok {
            let env = EnvConfig {
                python: self.tool.python().to_owned(),
                source_root: self.config.subject_root.clone(),
                work_root: self.out(&["runs"]),
                timeout: Duration::from_secs(self.config.timeout_secs),
            };
            let art = run_suite(suite, &env)?;
            let cov = measure_class_coverage(art.coverage.as_ref(), api, &self.config.subject_root, &self.tool)?;
            (SuiteTally::from_outcome(&art.outcome), Some(art.outcome), cov)
        } else {
            let cov = measure_class_coverage(None, api, &self.config.subject_root, &self.tool)?;
            (SuiteTally::unparsable(), None, cov)
        };
        Ok(EvaluationRecord {
            evaluation: CellEvaluation {
                cell: suite.cell.clone(),
                tally,
                coverage: Some(coverage),
            },
            outcome,
        })
    }

    fn process_cell(&self, state: &ProjectState, api: &ApiRecord, key: &CellKey, until: Stage) -> CellOutcome {
        let run_id = key.run_id();
        let mut out = CellOutcome {
            evaluation: None,
            cost: None,
            generated: false,
            executed: false,
            failure: None,
        };
        let fail = |stage: &str, fp: &str, e: String| {
            if let Err(io) = self.manifest.failed(stage, &run_id, fp, &e) {
                log::error!("manifest write failed: {io}");
            }
            Some(CellFailure {
                run_id: run_id.clone(),
                stage: stage.to_owned(),
                error: e,
            })
        };

        let depths = serde_json::to_string(&self.config.retrieval_k).unwrap_or_default();
        let gen_fp = fingerprint(&[
            b"generate",
            state.fingerprint.as_bytes(),
            self.template_text.as_bytes(),
            self.provider_fingerprint.as_bytes(),
            run_id.as_bytes(),
            depths.as_bytes(),
            format!("{:?}/{}", self.config.max_output_tokens, self.config.prose_fallback).as_bytes(),
        ]);
        let gen_path = self.out(&["generations", &format!("{run_id}.json")]);
        let generation = if self.current("generate", &run_id, &gen_fp, &[&gen_path]) {
            read_json::<GenerationRecord>(&gen_path)
        } else {
            out.generated = true;
            self.generate(state, api, key).and_then(|g| {
                write_json(&gen_path, &g)?;
                let suite_path = self.out(&["suites", &format!("{run_id}.py")]);
                fs::write(suite_path, &g.suite.source)?;
                self.manifest.completed("generate", &run_id, &gen_fp)?;
                Ok(g)
            })
        };
        let generation = match generation {
            Ok(g) => g,
            Err(e) => {
                out.failure = fail("generate", &gen_fp, e.to_string());
                return out;
            }
        };
        out.cost = Some(generation.cost.clone());
        if until < Stage::Execute {
            return out;
        }

        let exec_fp = fingerprint(&[
            b"execute",
            gen_fp.as_bytes(),
            self.subject_fingerprint.as_bytes(),
            &self.config.timeout_secs.to_le_bytes(),
            self.tool.python().to_string_lossy().as_bytes(),
        ]);
        let eval_path = self.out(&["evaluations", &format!("{run_id}.json")]);
        let evaluation = if self.current("execute", &run_id, &exec_fp, &[&eval_path]) {
            read_json::<EvaluationRecord>(&eval_path)
        } else {
            out.executed = true;
            self.execute(api, &generation.suite)
                .map_err(|e| CampaignError::Report(e.to_string()))
                .and_then(|r| {
                    write_json(&eval_path, &r)?;
                    self.manifest.completed("execute", &run_id, &exec_fp)?;
                    Ok(r)
                })
        };
        match evaluation {
            Ok(r) => out.evaluation = Some(r.evaluation),
            Err(e) => out.failure = fail("execute", &exec_fp, e.to_string()),
        }
        out
    }

    /// Runs every stage up to and including `until`.
    pub fn run(&self, until: Stage) -> Result<CampaignSummary, CampaignError> {
        let states = self.prepare(until)?;
        let mut summary = CampaignSummary::default();
        if until < Stage::Generate {
            return Ok(summary);
        }
        let cells = self.cell_keys(&states);
        summary.cells = cells.len();
        fs::create_dir_all(self.out(&["suites"]))?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.config.parallelism)
            .build()
            .map_err(|e| CampaignError::Report(e.to_string()))?;
        let outcomes: Vec<CellOutcome> = pool.install(|| {
            cells
                .par_iter()
                .map(|(state, api, key)| {
                    if let Some(parent) = self.out(&["suites", &format!("{}.py", key.run_id())]).parent() {
                        let _ = fs::create_dir_all(parent);
                    }
                    self.process_cell(state, api, key, until)
                })
                .collect()
        });

        let mut evaluations = Vec::new();
        let mut costs = Vec::new();
        for o in outcomes {
            summary.generated += usize::from(o.generated && o.cost.is_some());
            summary.generation_reused += usize::from(!o.generated && o.cost.is_some());
            summary.executed += usize::from(o.executed && o.evaluation.is_some());
            summary.execution_reused += usize::from(!o.executed && o.evaluation.is_some());
            evaluations.extend(o.evaluation);
            costs.extend(o.cost);
            summary.failures.extend(o.failure);
        }
        if until < Stage::Evaluate {
            return Ok(summary);
        }

        let rows: Vec<MetricRow> = metric_rows(&evaluations, self.config.coverage_aggregation);
        let missing: Vec<MissingCell> = summary
            .failures
            .iter()
            .map(|f| MissingCell {
                run_id: f.run_id.clone(),
                stage: f.stage.clone(),
                reason: f.error.clone(),
            })
            .collect();
        let dir = self.out(&["reports"]);
        summary.reports = report::write_metrics(&dir, &rows)?;
        if until >= Stage::Report {
            summary.reports.extend(report::write_all(
                &dir,
                &report::ReportInputs {
                    config: &self.config,
                    rows: &rows,
                    evaluations: &evaluations,
                    costs: &costs,
                    missing: &missing,
                },
            )?);
        }
        Ok(summary)
    }
}
