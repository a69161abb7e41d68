mod common;

use std::path::Path;
use std::process::Command;

use ragtest::campaign::{Campaign, EvaluationRecord, ProviderConfig, RunOptions, Stage};
use ragtest::executor::TestStatus;
use ragtest::llmclient::{MockFixtures, MockTest};
use ragtest::promptgen::{RagMode, TestBudget};
use ragtest::retrieval::SourceSelector;

use common::{fixtures, toy_config};

fn evaluation(root: &Path, run_id: &str) -> EvaluationRecord {
    let text = std::fs::read_to_string(root.join("evaluations").join(format!("{run_id}.json"))).unwrap();
    serde_json::from_str(&text).unwrap()
}

#[test]
fn rerun_reuses_every_stage() {
    let out = tempfile::tempdir().unwrap();
    let mut cfg = toy_config(out.path());
    cfg.modes = vec![RagMode::ZeroShot, RagMode::ApiLevel(SourceSelector::Issues)];
    cfg.budgets = vec![TestBudget::Unlimited, TestBudget::Fixed(3)];

    let first = Campaign::open(cfg.clone(), RunOptions::default()).unwrap().run(Stage::Report).unwrap();
    assert_eq!(first.cells, 2 * 2 * 2 * 3);
    assert_eq!(first.generated, first.cells);
    assert_eq!(first.exit_code(), 0);
    let metrics = std::fs::read(out.path().join("reports/metrics.json")).unwrap();

    let second = Campaign::open(cfg.clone(), RunOptions::default()).unwrap().run(Stage::Report).unwrap();
    assert_eq!((second.generated, second.executed), (0, 0));
    assert_eq!(second.generation_reused, first.cells);
    assert_eq!(metrics, std::fs::read(out.path().join("reports/metrics.json")).unwrap());

    // execution settings invalidate execution only
    cfg.timeout_secs = 31;
    let third = Campaign::open(cfg, RunOptions::default()).unwrap().run(Stage::Report).unwrap();
    assert_eq!((third.generated, third.executed), (0, first.cells));
}

#[test]
fn stopping_early_leaves_later_stages_for_the_next_run() {
    let out = tempfile::tempdir().unwrap();
    let mut cfg = toy_config(out.path());
    cfg.models.truncate(1);
    cfg.modes = vec![RagMode::ZeroShot];
    cfg.budgets = vec![TestBudget::Unlimited];
    let gen = Campaign::open(cfg.clone(), RunOptions::default()).unwrap().run(Stage::Generate).unwrap();
    assert_eq!((gen.generated, gen.executed), (3, 0));
    assert!(!out.path().join("reports").exists());
    let rest = Campaign::open(cfg, RunOptions::default()).unwrap().run(Stage::Report).unwrap();
    assert_eq!((rest.generated, rest.executed), (0, 3));
}

#[test]
fn hanging_suite_only_costs_its_own_cell() {
    let out = tempfile::tempdir().unwrap();
    let mut fx = MockFixtures::load(&fixtures().join("toy/mock_fixtures.json")).unwrap();
    fx.apis.get_mut("toypkg.stack.Stack").unwrap().tests.push(MockTest {
        name: "test_hang".into(),
        body: "        while True:\n            pass".into(),
        requires: None,
    });
    let fx_path = out.path().join("fixtures.json");
    std::fs::write(&fx_path, serde_json::to_string(&fx).unwrap()).unwrap();

    let mut cfg = toy_config(&out.path().join("campaign"));
    cfg.provider = ProviderConfig::Mock { fixtures: Some(fx_path) };
    cfg.models = vec!["m".into()];
    cfg.modes = vec![RagMode::ZeroShot];
    cfg.budgets = vec![TestBudget::Unlimited];
    cfg.timeout_secs = 2;
    let summary = Campaign::open(cfg, RunOptions::default()).unwrap().run(Stage::Report).unwrap();
    assert_eq!(summary.exit_code(), 0);

    let root = out.path().join("campaign");
    let stack = evaluation(&root, "m/toypkg/zero_shot/unlimited/toypkg.stack.Stack");
    let o = stack.outcome.unwrap();
    assert!(o.timed_out);
    assert_eq!(o.statuses["test_hang"], TestStatus::Errored);
    let counter = evaluation(&root, "m/toypkg/zero_shot/unlimited/toypkg.counter.Counter");
    assert_eq!(counter.evaluation.coverage.unwrap().class_coverage_pct, 50.0);
}

fn ragtest(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_ragtest")).args(args).output().unwrap()
}

#[test]
fn bad_config_exits_with_one_and_lists_problems() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.toml");
    std::fs::write(
        &path,
        "output_root = \"o\"\nsubject_root = \"missing\"\nmodels = []\n[provider]\nkind = \"mock\"\n",
    )
    .unwrap();
    let out = ragtest(&["run", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("subject_root") && err.contains("models"), "{err}");
}

#[test]
fn analyze_reports_wins_and_friedman() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.csv");
    std::fs::write(&path, "block,a,b,c\np1,1,2,3\np2,1,3,2\np3,2,1,3\n").unwrap();
    let p = path.to_str().unwrap();
    let out = ragtest(&["analyze", "--matrix", p, "--pairs", "c:a", "--friedman", p]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["win_counts"][0]["wins_a"], 3);
    assert!(v["friedman"]["p_value"].as_f64().unwrap() > 0.0);
}

#[test]
fn template_change_regenerates_without_rebuilding_stores() {
    use ragtest::campaign::ManifestEvent;

    let out = tempfile::tempdir().unwrap();
    let mut cfg = toy_config(&out.path().join("c"));
    cfg.models.truncate(1);
    cfg.modes = vec![RagMode::ZeroShot, RagMode::Basic(SourceSelector::Combined)];
    cfg.budgets = vec![TestBudget::Unlimited];
    let first = Campaign::open(cfg.clone(), RunOptions::default()).unwrap().run(Stage::Report).unwrap();

    let template = ragtest::promptgen::DEFAULT_TEMPLATE.replace("cover new lines", "cover new lines of code");
    assert_ne!(template, ragtest::promptgen::DEFAULT_TEMPLATE);
    let path = out.path().join("template.toml");
    std::fs::write(&path, template).unwrap();
    cfg.template = Some(path);
    let campaign = Campaign::open(cfg, RunOptions::default()).unwrap();
    let second = campaign.run(Stage::Report).unwrap();
    assert_eq!(second.generated, first.cells);

    let per_project = |stage: &str| {
        campaign
            .manifest()
            .events()
            .unwrap()
            .iter()
            .filter(|e| matches!(e, ManifestEvent::StageCompleted { stage: s, .. } if s == stage))
            .count()
    };
    assert_eq!((per_project("ingest"), per_project("stores")), (1, 1));
    assert_eq!(per_project("generate"), 2 * first.cells);
}

struct FlakyForStack(ragtest::llmclient::MockProvider);

impl ragtest::llmclient::ChatProvider for FlakyForStack {
    fn id(&self) -> String {
        "flaky".into()
    }

    fn complete(
        &self,
        request: &ragtest::llmclient::ChatRequest,
    ) -> Result<ragtest::llmclient::ChatResponse, ragtest::llmclient::ProviderError> {
        if request.prompt.contains("toypkg.stack.Stack in") {
            return Err(ragtest::llmclient::ProviderError::Status {
                status: 400,
                message: "rejected".into(),
            });
        }
        self.0.complete(request)
    }
}

#[test]
fn provider_failure_is_reported_as_a_missing_cell() {
    let out = tempfile::tempdir().unwrap();
    let mut cfg = toy_config(out.path());
    cfg.models.truncate(1);
    cfg.modes = vec![RagMode::ZeroShot, RagMode::ApiLevel(SourceSelector::Qas)];
    cfg.budgets = vec![TestBudget::Unlimited];
    let fx = MockFixtures::load(&fixtures().join("toy/mock_fixtures.json")).unwrap();
    let mock = ragtest::llmclient::MockProvider::new(fx, std::sync::Arc::new(ragtest::tokens::CharQuarterCounter));
    let provider = Box::new(FlakyForStack(mock));
    let summary = Campaign::with_provider(cfg, RunOptions::default(), provider, "flaky".into())
        .unwrap()
        .run(Stage::Report)
        .unwrap();
    assert_eq!(summary.exit_code(), 2);
    assert_eq!(summary.failures.len(), 2);
    assert!(summary.failures.iter().all(|f| f.stage == "generate" && f.run_id.ends_with("toypkg.stack.Stack")));

    let missing: Vec<ragtest::campaign::MissingCell> =
        serde_json::from_str(&std::fs::read_to_string(out.path().join("reports/missing.json")).unwrap()).unwrap();
    assert_eq!(missing.len(), 2);
    let rows: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.path().join("reports/metrics.json")).unwrap()).unwrap();
    assert!(rows.as_array().unwrap().iter().all(|r| r["n_suites"] == 2));
}
