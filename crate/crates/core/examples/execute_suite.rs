//! Runs a hand-written suite against the toy package and measures class
//! coverage of the API it targets.
//!
//!     cargo run --example execute_suite [path/to/suite.py]

use std::path::Path;
use std::time::Duration;

use ragtest::corpus::read_api_records;
use ragtest::executor::{measure_class_coverage, run_suite, EnvConfig};
use ragtest::promptgen::{RagMode, TestBudget};
use ragtest::pytool::PythonTool;
use ragtest::testsuite::{CellKey, GeneratedSuite};

fn main() -> anyhow::Result<()> {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let path = std::env::args()
        .nth(1)
        .map(Into::into)
        .unwrap_or_else(|| root.join("suites/failing.py"));
    let source = std::fs::read_to_string(&path)?;

    let tool = PythonTool::from_env();
    let cell = CellKey {
        model_id: "hand".into(),
        project: "toypkg".into(),
        mode: RagMode::ZeroShot,
        budget: TestBudget::Unlimited,
        api_name: "toypkg.stack.Stack".into(),
    };
    let suite = GeneratedSuite::from_response(cell, &format!("```python\n{source}```"), &tool, Default::default())?;

    let work = tempfile::tempdir()?;
    let subject = root.join("toy/subject");
    let env = EnvConfig::new(&subject, work.path()).with_timeout(Duration::from_secs(10));
    let run = run_suite(&suite, &env)?;
    println!("completed={} timed_out={} in {:.2}s", run.outcome.runner_completed, run.outcome.timed_out, run.outcome.wall_time_secs);
    for (name, status) in &run.outcome.statuses {
        println!("  {name:<24} {status:?}");
    }

    let apis = read_api_records(&root.join("toy/corpus/apis.jsonl"))?;
    let stack = apis.iter().find(|a| a.class_name == "Stack").expect("toy api");
    let cov = measure_class_coverage(run.coverage.as_ref(), stack, &subject, &tool)?;
    println!(
        "Stack coverage {}/{} = {:.2}%, missed lines {:?}",
        cov.class_covered,
        cov.class_executable,
        cov.class_coverage_pct,
        cov.class_executable_lines.difference(&cov.class_covered_lines).collect::<Vec<_>>()
    );
    Ok(())
}
