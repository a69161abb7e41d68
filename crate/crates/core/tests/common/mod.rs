#![allow(dead_code)]

use std::path::{Path, PathBuf};

use ragtest::campaign::CampaignConfig;
use ragtest::promptgen::{RagMode, TestBudget};
use ragtest::pytool::PythonTool;
use ragtest::testsuite::{CellKey, GeneratedSuite};

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn toy_subject() -> PathBuf {
    fixtures().join("toy/subject")
}

/// A fixture suite wrapped as if a model had produced it.
pub fn fixture_suite(name: &str, tool: &PythonTool) -> GeneratedSuite {
    let source = std::fs::read_to_string(fixtures().join("suites").join(format!("{name}.py"))).unwrap();
    let cell = CellKey {
        model_id: "fixture".into(),
        project: "toypkg".into(),
        mode: RagMode::ZeroShot,
        budget: TestBudget::Unlimited,
        api_name: name.into(),
    };
    let response = format!("```python\n{source}```\n");
    GeneratedSuite::from_response(cell, &response, tool, Default::default()).unwrap()
}

/// The bundled toy campaign, writing under `output_root`.
pub fn toy_config(output_root: &Path) -> CampaignConfig {
    let mut cfg = CampaignConfig::load(&fixtures().join("toy/campaign.toml")).unwrap();
    cfg.output_root = output_root.to_owned();
    cfg
}
