//! Asks the deterministic mock model for suites under different budgets and
//! extracts the code from its replies.
//!
//!     cargo run --example mock_generation

use std::path::Path;
use std::sync::Arc;

use ragtest::corpus::ApiRecord;
use ragtest::llmclient::{complete, ChatRequest, CostCollector, GenerationCell, MockFixtures, MockProvider, RetryPolicy};
use ragtest::promptgen::{build_prompt, PromptTemplate, RagMode, TestBudget};
use ragtest::pytool::PythonTool;
use ragtest::testsuite::{CellKey, GeneratedSuite};
use ragtest::tokens::CharQuarterCounter;

fn main() -> anyhow::Result<()> {
    let toy = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/toy");
    let fixtures = MockFixtures::load(&toy.join("mock_fixtures.json"))?;
    let provider = MockProvider::new(fixtures, Arc::new(CharQuarterCounter));
    let apis = ragtest::corpus::read_api_records(&toy.join("corpus/apis.jsonl"))?;
    let api: &ApiRecord = apis.iter().find(|a| a.class_name == "Stack").expect("toy api");
    let template = PromptTemplate::default();
    let tool = PythonTool::from_env();
    let costs = CostCollector::default();

    for budget in [TestBudget::Unlimited, TestBudget::Fixed(1), TestBudget::Fixed(3)] {
        let mode = RagMode::ZeroShot;
        let spec = build_prompt(api, "toypkg", mode, Vec::new(), budget, &template)?;
        let cell = GenerationCell {
            api_name: &api.api_name,
            mode,
            budget,
        };
        let request = ChatRequest::new("mock", spec.final_text);
        let reply = complete(&provider, &request, RetryPolicy::no_wait(1), &cell, &costs)
            .map_err(|f| anyhow::anyhow!("{}", f.last))?;
        let key = CellKey {
            model_id: "mock".into(),
            project: "toypkg".into(),
            mode,
            budget,
            api_name: api.api_name.clone(),
        };
        let suite = GeneratedSuite::from_response(key, &reply.text, &tool, Default::default())?;
        println!("budget {budget:<9} parse_ok={} tests={:?}", suite.parse_ok, suite.test_names);
    }
    let total = costs.totals();
    println!("\ntokens: {} in, {} out", total.input_tokens, total.output_tokens);
    Ok(())
}
