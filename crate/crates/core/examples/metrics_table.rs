//! Aggregates per-suite tallies into the metric table.
//!
//!     cargo run --example metrics_table

use std::collections::BTreeSet;

use ragtest::executor::class_record;
use ragtest::metrics::{metric_rows, rows_to_csv, rows_to_markdown, CellEvaluation, CoverageAggregation, SuiteTally};
use ragtest::promptgen::{RagMode, TestBudget};
use ragtest::retrieval::SourceSelector;
use ragtest::testsuite::CellKey;

fn eval(mode: RagMode, api: &str, tally: SuiteTally, covered: u32, executable: u32) -> CellEvaluation {
    let cov = class_record(
        Default::default(),
        "pkg/mod.py".into(),
        (1..=executable).collect::<BTreeSet<_>>(),
        (1..=covered).collect(),
    );
    CellEvaluation {
        cell: CellKey {
            model_id: "model".into(),
            project: "pkg".into(),
            mode,
            budget: TestBudget::Unlimited,
            api_name: api.into(),
        },
        tally,
        coverage: Some(cov),
    }
}

fn tally(passed: usize, failed: usize, errored: usize) -> SuiteTally {
    SuiteTally {
        parse_ok: true,
        passed,
        failed,
        errored,
    }
}

fn main() -> anyhow::Result<()> {
    let api_level = RagMode::ApiLevel(SourceSelector::Combined);
    let evals = vec![
        eval(RagMode::ZeroShot, "pkg.A", tally(3, 1, 0), 4, 10),
        eval(RagMode::ZeroShot, "pkg.B", SuiteTally::unparsable(), 0, 20),
        eval(api_level, "pkg.A", tally(4, 1, 1), 8, 10),
        eval(api_level, "pkg.B", tally(2, 0, 2), 5, 20),
    ];
    for how in [CoverageAggregation::Mean, CoverageAggregation::Pooled] {
        println!("{}", rows_to_markdown(&metric_rows(&evals, how)));
    }
    print!("{}", rows_to_csv(&metric_rows(&evals, CoverageAggregation::Mean))?);
    Ok(())
}
