//! Campaign configuration file.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::{DEFAULT_TARGET_FRACTION, DEFAULT_TOKEN_LIMIT};
use crate::llmclient::HttpProviderConfig;
use crate::metrics::CoverageAggregation;
use crate::promptgen::{RagMode, RetrievalDepths, TestBudget};

use super::CampaignError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectConfig {
    pub name: String,
    /// Library name used in the query sentence.
    pub library_name: String,
    pub apis: PathBuf,
    pub issues: PathBuf,
    pub qas: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProviderConfig {
    Mock {
        #[serde(default)]
        fixtures: Option<PathBuf>,
    },
    Http(HttpProviderConfig),
}

fn all_modes() -> Vec<RagMode> {
    RagMode::ALL.to_vec()
}

fn study_budgets() -> Vec<TestBudget> {
    TestBudget::STUDY.to_vec()
}

fn default_parallelism() -> usize {
    4
}

fn default_timeout() -> u64 {
    300
}

fn default_fraction() -> f64 {
    DEFAULT_TARGET_FRACTION
}

fn default_token_limit() -> usize {
    DEFAULT_TOKEN_LIMIT
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignConfig {
    pub output_root: PathBuf,
    /// Directory holding the subject packages; placed on the module path.
    pub subject_root: PathBuf,
    #[serde(default)]
    pub python: Option<PathBuf>,
    #[serde(default)]
    pub projects: Vec<ProjectConfig>,
    #[serde(default)]
    pub models: Vec<String>,
    #[serde(default = "all_modes")]
    pub modes: Vec<RagMode>,
    #[serde(default = "study_budgets")]
    pub budgets: Vec<TestBudget>,
    pub provider: ProviderConfig,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default = "default_fraction")]
    pub fraction: f64,
    #[serde(default = "default_token_limit")]
    pub token_limit: usize,
    #[serde(default)]
    pub retrieval_k: RetrievalDepths,
    #[serde(default)]
    pub template: Option<PathBuf>,
    #[serde(default)]
    pub coverage_aggregation: CoverageAggregation,
    /// Also extract unfenced code from responses.
    #[serde(default)]
    pub prose_fallback: bool,
    #[serde(default)]
    pub max_output_tokens: Option<u32>,
    /// Budget whose cells feed the cross-approach comparisons.
    #[serde(default = "unlimited")]
    pub compare_budget: TestBudget,
}

fn unlimited() -> TestBudget {
    TestBudget::Unlimited
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

fn path_safe(s: &str) -> bool {
    !s.is_empty() && s != "." && s != ".." && !s.contains(['/', '\\'])
}

impl CampaignConfig {
    /// Reads a TOML config; relative paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self, CampaignError> {
        let text = std::fs::read_to_string(path).map_err(|e| CampaignError::Config {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let mut cfg: CampaignConfig = toml::from_str(&text).map_err(|e| CampaignError::Config {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let base = std::path::absolute(path)
            .ok()
            .and_then(|p| p.parent().map(Path::to_path_buf))
            .unwrap_or_else(|| PathBuf::from("."));
        cfg.resolve_paths(&base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        resolve(base, &mut self.output_root);
        resolve(base, &mut self.subject_root);
        for p in &mut self.projects {
            resolve(base, &mut p.apis);
            resolve(base, &mut p.issues);
            resolve(base, &mut p.qas);
        }
        if let ProviderConfig::Mock { fixtures: Some(f) } = &mut self.provider {
            resolve(base, f);
        }
        if let Some(t) = &mut self.template {
            resolve(base, t);
        }
    }

    /// Collects every problem rather than stopping at the first.
    pub fn validate(&self) -> Result<(), CampaignError> {
        let mut problems = Vec::new();
        let mut need_file = |what: String, p: &Path| {
            if !p.is_file() {
                problems.push(format!("{what}: {} does not exist", p.display()));
            }
        };
        for p in &self.projects {
            need_file(format!("projects.{}.apis", p.name), &p.apis);
            need_file(format!("projects.{}.issues", p.name), &p.issues);
            need_file(format!("projects.{}.qas", p.name), &p.qas);
        }
        if let ProviderConfig::Mock { fixtures: Some(f) } = &self.provider {
            need_file("provider.fixtures".into(), f);
        }
        if let Some(t) = &self.template {
            need_file("template".into(), t);
        }
        if !self.subject_root.is_dir() {
            problems.push(format!("subject_root: {} is not a directory", self.subject_root.display()));
        }
        if self.projects.is_empty() {
            problems.push("projects: at least one project is required".into());
        }
        let mut names = BTreeSet::new();
        for p in &self.projects {
            if !path_safe(&p.name) {
                problems.push(format!("projects: name {:?} cannot be used as a directory name", p.name));
            }
            if !names.insert(&p.name) {
                problems.push(format!("projects: duplicate name {}", p.name));
            }
        }
        if self.models.is_empty() {
            problems.push("models: at least one model is required".into());
        }
        for m in &self.models {
            if !path_safe(m) {
                problems.push(format!("models: id {m:?} cannot be used as a directory name"));
            }
        }
        if self.models.iter().collect::<BTreeSet<_>>().len() != self.models.len() {
            problems.push("models: duplicate ids".into());
        }
        if self.modes.is_empty() {
            problems.push("modes: at least one mode is required".into());
        }
        if self.budgets.is_empty() {
            problems.push("budgets: at least one budget is required".into());
        }
        if !(self.fraction > 0.0 && self.fraction <= 1.0) {
            problems.push(format!("fraction: {} is outside (0, 1]", self.fraction));
        }
        if self.parallelism == 0 {
            problems.push("parallelism: must be at least 1".into());
        }
        if self.timeout_secs == 0 {
            problems.push("timeout_secs: must be at least 1".into());
        }
        if self.token_limit == 0 {
            problems.push("token_limit: must be at least 1".into());
        }
        let k = &self.retrieval_k;
        if [k.basic, k.api_docs, k.issues, k.qas, k.combined_per_source].contains(&0) {
            problems.push("retrieval_k: every depth must be at least 1".into());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(CampaignError::Invalid(problems))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
output_root = "out"
subject_root = "src"
models = ["m1"]

[provider]
kind = "mock"

[[projects]]
name = "p"
library_name = "P"
apis = "apis.jsonl"
issues = "issues.jsonl"
qas = "qas.jsonl"
"#;

    #[test]
    fn defaults_and_resolution() {
        let dir = tempfile::tempdir().unwrap();
        for f in ["apis.jsonl", "issues.jsonl", "qas.jsonl"] {
            std::fs::write(dir.path().join(f), "").unwrap();
        }
        std::fs::create_dir(dir.path().join("src")).unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, MINIMAL).unwrap();
        let cfg = CampaignConfig::load(&path).unwrap();
        assert_eq!(cfg.modes.len(), 9);
        assert_eq!(cfg.budgets, TestBudget::STUDY.to_vec());
        assert_eq!(cfg.fraction, 0.10);
        assert_eq!(cfg.retrieval_k, RetrievalDepths::default());
        assert_eq!(cfg.projects[0].apis, dir.path().join("apis.jsonl"));
    }

    #[test]
    fn validation_lists_every_problem() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        let text = MINIMAL.replace("models = [\"m1\"]", "models = []\nmodes = []\nfraction = 1.5");
        std::fs::write(&path, text).unwrap();
        let Err(CampaignError::Invalid(problems)) = CampaignConfig::load(&path) else {
            panic!("expected validation failure");
        };
        let joined = problems.join("\n");
        for needle in ["apis.jsonl", "subject_root", "models", "modes", "fraction"] {
            assert!(joined.contains(needle), "{needle} missing from {joined}");
        }
    }

    #[test]
    fn unknown_keys_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, format!("bogus = 1\n{MINIMAL}")).unwrap();
        assert!(matches!(CampaignConfig::load(&path), Err(CampaignError::Config { .. })));
    }

    #[test]
    fn full_key_set_parses() {
        let text = r#"
output_root = "out"
subject_root = "subject"
models = ["a", "b"]
modes = ["zero_shot", "api_level_combined"]
budgets = ["unlimited", 1, 3, 6]
coverage_aggregation = "pooled"
compare_budget = 3
max_output_tokens = 2048

[retrieval_k]
basic = 5
api_docs = 1
issues = 3
qas = 3
combined_per_source = 2

[provider]
kind = "http"
base_url = "https://api.example.com/v1"
api_key_env = "LLM_API_KEY"
"#;
        let cfg: CampaignConfig = toml::from_str(text).unwrap();
        assert_eq!(cfg.modes, vec![RagMode::ZeroShot, RagMode::ApiLevel(crate::retrieval::SourceSelector::Combined)]);
        assert_eq!(cfg.compare_budget, TestBudget::Fixed(3));
        assert_eq!(cfg.retrieval_k.basic, 5);
        assert!(matches!(cfg.provider, ProviderConfig::Http(ref h) if h.api_key_env.as_deref() == Some("LLM_API_KEY")));
        assert_eq!(cfg.coverage_aggregation, CoverageAggregation::Pooled);
    }
}
