//! Parse, execution, pass and line-coverage rates, and the per-cell table.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::executor::{CoverageRecord, ExecutionOutcome, TestStatus};
use crate::promptgen::{RagMode, TestBudget};
use crate::testsuite::CellKey;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("parse rate needs at least one suite")]
    NoSuites,
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Test tallies of one generated suite. Unparsable suites carry no tests.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuiteTally {
    pub parse_ok: bool,
    pub passed: usize,
    pub failed: usize,
    pub errored: usize,
}

impl SuiteTally {
    pub fn unparsable() -> Self {
        SuiteTally::default()
    }

    pub fn from_outcome(outcome: &ExecutionOutcome) -> Self {
        SuiteTally {
            parse_ok: true,
            passed: outcome.count(TestStatus::Passed),
            failed: outcome.count(TestStatus::Failed),
            errored: outcome.count(TestStatus::Errored),
        }
    }

    pub fn total(&self) -> usize {
        self.passed + self.failed + self.errored
    }
}

fn pct(num: usize, den: usize) -> f64 {
    100.0 * num as f64 / den as f64
}

pub fn parse_rate(suites: &[SuiteTally]) -> Result<f64, MetricsError> {
    if suites.is_empty() {
        return Err(MetricsError::NoSuites);
    }
    Ok(pct(suites.iter().filter(|s| s.parse_ok).count(), suites.len()))
}

fn parsable_totals(suites: &[SuiteTally]) -> (usize, usize, usize) {
    suites
        .iter()
        .filter(|s| s.parse_ok)
        .fold((0, 0, 0), |(t, e, f), s| (t + s.total(), e + s.errored, f + s.failed))
}

/// Share of tests in parsable suites that ran without error; `None` when
/// there are no such tests.
pub fn execution_rate(suites: &[SuiteTally]) -> Option<f64> {
    let (t, e, _) = parsable_totals(suites);
    (t > 0).then(|| pct(t - e, t))
}

/// Share of executable tests that did not fail.
pub fn pass_rate(suites: &[SuiteTally]) -> Option<f64> {
    let (t, e, f) = parsable_totals(suites);
    let x = t - e;
    (x > 0).then(|| pct(x - f, x))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoverageAggregation {
    /// Unweighted mean of per-API class coverage.
    #[default]
    Mean,
    /// Covered lines over executable lines, summed across APIs.
    Pooled,
}

impl CoverageAggregation {
    pub fn as_str(&self) -> &'static str {
        match self {
            CoverageAggregation::Mean => "mean",
            CoverageAggregation::Pooled => "pooled",
        }
    }
}

pub fn coverage_cell(records: &[CoverageRecord], how: CoverageAggregation) -> Option<f64> {
    if records.is_empty() {
        return None;
    }
    Some(match how {
        CoverageAggregation::Mean => {
            records.iter().map(|r| r.class_coverage_pct).sum::<f64>() / records.len() as f64
        }
        CoverageAggregation::Pooled => {
            let exec: usize = records.iter().map(|r| r.class_executable).sum();
            if exec == 0 {
                0.0
            } else {
                pct(records.iter().map(|r| r.class_covered).sum(), exec)
            }
        }
    })
}

/// Everything measured for one generation cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellEvaluation {
    pub cell: CellKey,
    pub tally: SuiteTally,
    pub coverage: Option<CoverageRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub project: String,
    pub model_id: String,
    pub mode: RagMode,
    pub budget: TestBudget,
    pub parse_rate_pct: f64,
    pub execution_rate_pct: Option<f64>,
    pub pass_rate_pct: Option<f64>,
    pub line_coverage_pct: Option<f64>,
    pub coverage_aggregation: CoverageAggregation,
    pub n_suites: usize,
    pub n_tests: usize,
}

/// One row per (project, model, mode, budget), in that sort order.
pub fn metric_rows(evals: &[CellEvaluation], how: CoverageAggregation) -> Vec<MetricRow> {
    let mut groups: BTreeMap<(&str, &str, RagMode, TestBudget), Vec<&CellEvaluation>> = BTreeMap::new();
    for e in evals {
        let c = &e.cell;
        groups
            .entry((c.project.as_str(), c.model_id.as_str(), c.mode, c.budget))
            .or_default()
            .push(e);
    }
    groups
        .into_iter()
        .map(|((project, model, mode, budget), cells)| {
            let tallies: Vec<SuiteTally> = cells.iter().map(|e| e.tally).collect();
            let coverage: Vec<CoverageRecord> = cells.iter().filter_map(|e| e.coverage.clone()).collect();
            MetricRow {
                project: project.to_owned(),
                model_id: model.to_owned(),
                mode,
                budget,
                parse_rate_pct: parse_rate(&tallies).expect("groups are nonempty"),
                execution_rate_pct: execution_rate(&tallies),
                pass_rate_pct: pass_rate(&tallies),
                line_coverage_pct: coverage_cell(&coverage, how),
                coverage_aggregation: how,
                n_suites: tallies.len(),
                n_tests: tallies.iter().filter(|t| t.parse_ok).map(|t| t.total()).sum(),
            }
        })
        .collect()
}

fn fmt2(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.2}")).unwrap_or_default()
}

const HEADER: [&str; 11] = [
    "project", "model", "mode", "budget", "PR%", "EX%", "PS%", "CV%", "CV aggregation", "suites", "tests",
];

fn cells(r: &MetricRow) -> [String; 11] {
    [
        r.project.clone(),
        r.model_id.clone(),
        r.mode.to_string(),
        r.budget.to_string(),
        fmt2(Some(r.parse_rate_pct)),
        fmt2(r.execution_rate_pct),
        fmt2(r.pass_rate_pct),
        fmt2(r.line_coverage_pct),
        r.coverage_aggregation.as_str().to_owned(),
        r.n_suites.to_string(),
        r.n_tests.to_string(),
    ]
}

pub fn rows_to_csv(rows: &[MetricRow]) -> Result<String, MetricsError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(HEADER)?;
    for r in rows {
        w.write_record(cells(r))?;
    }
    let bytes = w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn rows_to_markdown(rows: &[MetricRow]) -> String {
    let mut out = format!("| {} |\n|{}\n", HEADER.join(" | "), "---|".repeat(HEADER.len()));
    for r in rows {
        let c = cells(r).map(|s| if s.is_empty() { "n/a".to_owned() } else { s });
        let _ = writeln!(out, "| {} |", c.join(" | "));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    fn t(parse_ok: bool, passed: usize, failed: usize, errored: usize) -> SuiteTally {
        SuiteTally {
            parse_ok,
            passed,
            failed,
            errored,
        }
    }

    fn cov(covered: usize, executable: usize) -> CoverageRecord {
        crate::executor::class_record(
            BTreeMap::new(),
            "f.py".into(),
            (0..executable as u32).collect(),
            (0..covered as u32).collect::<BTreeSet<_>>(),
        )
    }

    #[test]
    fn rate_examples() {
        let mut suites = vec![t(true, 1, 0, 0); 9];
        suites.push(t(false, 0, 0, 0));
        assert_eq!(parse_rate(&suites).unwrap(), 90.0);
        assert_eq!(parse_rate(&[t(false, 0, 0, 0)]).unwrap(), 0.0);
        assert!(parse_rate(&[]).is_err());

        assert_eq!(execution_rate(&[t(true, 2, 1, 2)]), Some(60.0));
        assert_eq!(execution_rate(&[t(true, 3, 0, 0)]), Some(100.0));
        assert_eq!(execution_rate(&[t(true, 0, 0, 0), t(false, 0, 0, 0)]), None);

        let p = pass_rate(&[t(true, 2, 1, 4)]).unwrap();
        assert!((p - 66.67).abs() < 0.01);
        assert_eq!(pass_rate(&[t(true, 0, 3, 1)]), Some(0.0));
        assert_eq!(pass_rate(&[t(true, 0, 0, 2)]), None);
    }

    #[test]
    fn coverage_aggregations() {
        let rs = [cov(2, 5), cov(3, 5)];
        assert_eq!(coverage_cell(&rs, CoverageAggregation::Mean), Some(50.0));
        assert_eq!(coverage_cell(&rs[..1], CoverageAggregation::Mean), Some(40.0));
        assert_eq!(coverage_cell(&[], CoverageAggregation::Mean), None);
        let rs = [cov(1, 2), cov(0, 8)];
        assert_eq!(coverage_cell(&rs, CoverageAggregation::Mean), Some(25.0));
        assert_eq!(coverage_cell(&rs, CoverageAggregation::Pooled), Some(10.0));
    }

    #[test]
    fn renders_two_decimals_and_blanks() {
        let row = MetricRow {
            project: "p".into(),
            model_id: "m".into(),
            mode: RagMode::ZeroShot,
            budget: TestBudget::Unlimited,
            parse_rate_pct: 200.0 / 3.0,
            execution_rate_pct: None,
            pass_rate_pct: Some(100.0),
            line_coverage_pct: Some(12.345),
            coverage_aggregation: CoverageAggregation::Mean,
            n_suites: 3,
            n_tests: 0,
        };
        let csv = rows_to_csv(std::slice::from_ref(&row)).unwrap();
        assert!(csv.lines().nth(1).unwrap().starts_with("p,m,zero_shot,unlimited,66.67,,100.00,12.35,mean,3,0"));
        let md = rows_to_markdown(&[row]);
        assert!(md.contains("| 66.67 | n/a | 100.00 |"));
    }

    fn tally_strategy() -> impl Strategy<Value = SuiteTally> {
        (any::<bool>(), 0usize..6, 0usize..6, 0usize..6).prop_map(|(ok, p, f, e)| {
            if ok { t(true, p, f, e) } else { t(false, 0, 0, 0) }
        })
    }

    proptest! {
        #[test]
        fn more_errors_never_raise_execution_rate(
            mut suites in prop::collection::vec(tally_strategy(), 1..10), idx in any::<prop::sample::Index>()
        ) {
            let before = execution_rate(&suites);
            let i = idx.index(suites.len());
            let s = &mut suites[i];
            prop_assume!(s.parse_ok && s.passed + s.failed > 0);
            if s.passed > 0 { s.passed -= 1 } else { s.failed -= 1 }
            s.errored += 1;
            prop_assert!(execution_rate(&suites).unwrap() <= before.unwrap());
        }

        #[test]
        fn fixing_a_failure_never_lowers_pass_rate(
            mut suites in prop::collection::vec(tally_strategy(), 1..10), idx in any::<prop::sample::Index>()
        ) {
            let before = pass_rate(&suites);
            let i = idx.index(suites.len());
            let s = &mut suites[i];
            prop_assume!(s.parse_ok && s.failed > 0);
            s.failed -= 1;
            s.passed += 1;
            prop_assert!(pass_rate(&suites).unwrap() >= before.unwrap());
        }

        #[test]
        fn parse_rate_ignores_test_counts(suites in prop::collection::vec(tally_strategy(), 1..10)) {
            let flags: Vec<SuiteTally> = suites.iter().map(|s| t(s.parse_ok, 0, 0, 0)).collect();
            prop_assert_eq!(parse_rate(&suites).unwrap(), parse_rate(&flags).unwrap());
        }

        #[test]
        fn rows_count_tests_of_parsable_suites(suites in prop::collection::vec(tally_strategy(), 1..10)) {
            let evals: Vec<CellEvaluation> = suites.iter().enumerate().map(|(i, s)| CellEvaluation {
                cell: CellKey {
                    model_id: "m".into(), project: "p".into(), mode: RagMode::ZeroShot,
                    budget: TestBudget::Unlimited, api_name: format!("p.A{i}"),
                },
                tally: *s,
                coverage: None,
            }).collect();
            let rows = metric_rows(&evals, CoverageAggregation::Mean);
            prop_assert_eq!(rows.len(), 1);
            let expect: usize = suites.iter().filter(|s| s.parse_ok).map(|s| s.total()).sum();
            prop_assert_eq!(rows[0].n_tests, expect);
            for v in [Some(rows[0].parse_rate_pct), rows[0].execution_rate_pct, rows[0].pass_rate_pct].into_iter().flatten() {
                prop_assert!((0.0..=100.0).contains(&v));
            }
        }
    }
}
