//! Report files. Everything here is a pure function of stage artifacts, so
//! repeated campaigns produce identical bytes.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::analysis::{
    cost_report, friedman, line_set_reports, win_counts, win_grid, CostRow, CoverageMatrix, LineSet,
};
use crate::llmclient::CostRecord;
use crate::metrics::{rows_to_csv, rows_to_markdown, CellEvaluation, MetricRow};
use crate::promptgen::RagMode;
use crate::retrieval::SourceSelector;

use super::{write_json, CampaignConfig, CampaignError};

/// A cell absent from the reports, with the reason.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MissingCell {
    pub run_id: String,
    pub stage: String,
    pub reason: String,
}

pub(super) struct ReportInputs<'a> {
    pub config: &'a CampaignConfig,
    pub rows: &'a [MetricRow],
    pub evaluations: &'a [CellEvaluation],
    pub costs: &'a [CostRecord],
    pub missing: &'a [MissingCell],
}

fn report_err(e: impl std::fmt::Display) -> CampaignError {
    CampaignError::Report(e.to_string())
}

fn write_text(path: PathBuf, text: &str, written: &mut Vec<PathBuf>) -> Result<(), CampaignError> {
    fs::write(&path, text)?;
    written.push(path);
    Ok(())
}

fn write_json_file<T: Serialize>(path: PathBuf, value: &T, written: &mut Vec<PathBuf>) -> Result<(), CampaignError> {
    write_json(&path, value)?;
    written.push(path);
    Ok(())
}

fn emit_rows(dir: &Path, stem: &str, rows: &[MetricRow], written: &mut Vec<PathBuf>) -> Result<(), CampaignError> {
    write_text(dir.join(format!("{stem}.csv")), &rows_to_csv(rows).map_err(report_err)?, written)?;
    write_json_file(dir.join(format!("{stem}.json")), &rows, written)?;
    write_text(dir.join(format!("{stem}.md")), &rows_to_markdown(rows), written)
}

/// The full metric table, one row per (project, model, mode, budget).
pub(super) fn write_metrics(dir: &Path, rows: &[MetricRow]) -> Result<Vec<PathBuf>, CampaignError> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    emit_rows(dir, "metrics", rows, &mut written)?;
    Ok(written)
}

fn cost_markdown(rows: &[CostRow]) -> String {
    let mut out = String::from(
        "| mode | budget | generations | mean input | mean output | total input | total output |\n|---|---|---|---|---|---|---|\n",
    );
    for r in rows {
        let _ = writeln!(
            out,
            "| {} | {} | {} | {:.2} | {:.2} | {} | {} |",
            r.mode, r.budget, r.generations, r.mean_input_tokens, r.mean_output_tokens, r.total_input_tokens, r.total_output_tokens
        );
    }
    out
}

fn cost_csv(rows: &[CostRow]) -> Result<String, CampaignError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "mode",
        "budget",
        "generations",
        "mean_input_tokens",
        "mean_output_tokens",
        "total_input_tokens",
        "total_output_tokens",
    ])
    .map_err(report_err)?;
    for r in rows {
        w.write_record([
            r.mode.to_string(),
            r.budget.to_string(),
            r.generations.to_string(),
            format!("{:.2}", r.mean_input_tokens),
            format!("{:.2}", r.mean_output_tokens),
            r.total_input_tokens.to_string(),
            r.total_output_tokens.to_string(),
        ])
        .map_err(report_err)?;
    }
    String::from_utf8(w.into_inner().map_err(report_err)?).map_err(report_err)
}

fn wins_markdown(approaches: &[String], grid: &[Vec<usize>]) -> String {
    let mut out = format!("| wins of row over column | {} |\n|---|{}\n", approaches.join(" | "), "---|".repeat(approaches.len()));
    for (a, row) in approaches.iter().zip(grid) {
        let cells: Vec<String> = row.iter().map(usize::to_string).collect();
        let _ = writeln!(out, "| {a} | {} |", cells.join(" | "));
    }
    out
}

/// Headline table: one row per (project, model) for the baseline mode.
fn headline_rows(config: &CampaignConfig, rows: &[MetricRow]) -> Vec<MetricRow> {
    let mode = if config.modes.contains(&RagMode::ZeroShot) {
        RagMode::ZeroShot
    } else {
        config.modes[0]
    };
    rows.iter()
        .filter(|r| r.mode == mode && r.budget == config.compare_budget)
        .cloned()
        .collect()
}

fn comparisons(config: &CampaignConfig, rows: &[MetricRow], dir: &Path, written: &mut Vec<PathBuf>) -> Result<(), CampaignError> {
    let modes = &config.modes;
    let matrix = match CoverageMatrix::from_rows(rows, modes, config.compare_budget) {
        Ok(m) => m,
        Err(e) => {
            let skipped = json!({ "skipped": e.to_string() });
            write_json_file(dir.join("wins.json"), &skipped, written)?;
            return write_json_file(dir.join("friedman.json"), &skipped, written);
        }
    };
    write_text(dir.join("coverage_matrix.csv"), &matrix.to_csv().map_err(report_err)?, written)?;

    let approaches = matrix.approaches().to_vec();
    let grid = win_grid(&matrix, &approaches).map_err(report_err)?;
    let zero = RagMode::ZeroShot.to_string();
    let mut versus_zero_shot = BTreeMap::new();
    if approaches.contains(&zero) {
        for a in approaches.iter().filter(|a| **a != zero) {
            let (wins, losses, ties) = win_counts(&matrix, a, &zero).map_err(report_err)?;
            versus_zero_shot.insert(a.clone(), json!({ "wins": wins, "losses": losses, "ties": ties }));
        }
    }
    write_json_file(
        dir.join("wins.json"),
        &json!({
            "budget": config.compare_budget,
            "approaches": approaches,
            "grid": grid,
            "versus_zero_shot": versus_zero_shot,
        }),
        written,
    )?;
    write_text(dir.join("wins.md"), &wins_markdown(&approaches, &grid), written)?;

    let mut tests = BTreeMap::new();
    tests.insert("all_modes", friedman(&matrix).map_err(report_err)?);
    let trio = [
        RagMode::ZeroShot,
        RagMode::Basic(SourceSelector::Combined),
        RagMode::ApiLevel(SourceSelector::Combined),
    ];
    if modes.len() > 3 && trio.iter().all(|m| modes.contains(m)) {
        let sub = CoverageMatrix::from_rows(rows, &trio, config.compare_budget).map_err(report_err)?;
        tests.insert("zero_shot_basic_api_level", friedman(&sub).map_err(report_err)?);
    }
    write_json_file(dir.join("friedman.json"), &json!({ "budget": config.compare_budget, "tests": tests }), written)
}

fn line_sets(config: &CampaignConfig, evaluations: &[CellEvaluation]) -> Result<serde_json::Value, CampaignError> {
    // (model, project, api) -> (executable universe, mode -> covered)
    type Group = (LineSet, BTreeMap<String, LineSet>);
    let mut groups: BTreeMap<(String, String, String), Group> = BTreeMap::new();
    for e in evaluations.iter().filter(|e| e.cell.budget == config.compare_budget) {
        let Some(cov) = &e.coverage else { continue };
        let key = (e.cell.model_id.clone(), e.cell.project.clone(), e.cell.api_name.clone());
        let g = groups.entry(key).or_default();
        let tag = |l: &u32| (cov.class_file.clone(), *l);
        g.0.extend(cov.class_executable_lines.iter().map(tag));
        g.1.insert(e.cell.mode.to_string(), cov.class_covered_lines.iter().map(tag).collect());
    }
    let mut out = Vec::new();
    for ((model, project, api), (executable, covered)) in groups {
        if covered.len() < 2 {
            continue;
        }
        let reports = line_set_reports(&api, &executable, &covered).map_err(report_err)?;
        let uncovered = reports.first().map(|r| r.uncovered_common.clone()).unwrap_or_default();
        let unique: BTreeMap<String, LineSet> = reports.into_iter().map(|r| (r.approach, r.unique_lines)).collect();
        out.push(json!({
            "model": model,
            "project": project,
            "api": api,
            "unique_lines": unique,
            "uncovered_by_all": uncovered,
        }));
    }
    Ok(json!({ "budget": config.compare_budget, "apis": out }))
}

/// Headline, cost, win-count, ranking, line-set and missing-cell reports.
pub(super) fn write_all(dir: &Path, inputs: &ReportInputs<'_>) -> Result<Vec<PathBuf>, CampaignError> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    emit_rows(dir, "headline", &headline_rows(inputs.config, inputs.rows), &mut written)?;

    let costs = cost_report(inputs.costs);
    write_text(dir.join("cost.csv"), &cost_csv(&costs)?, &mut written)?;
    write_json_file(dir.join("cost.json"), &costs, &mut written)?;
    write_text(dir.join("cost.md"), &cost_markdown(&costs), &mut written)?;

    comparisons(inputs.config, inputs.rows, dir, &mut written)?;
    write_json_file(dir.join("line_sets.json"), &line_sets(inputs.config, inputs.evaluations)?, &mut written)?;

    let mut missing = inputs.missing.to_vec();
    missing.sort_by(|a, b| a.run_id.cmp(&b.run_id));
    let ids: BTreeSet<&str> = missing.iter().map(|m| m.run_id.as_str()).collect();
    debug_assert_eq!(ids.len(), missing.len());
    write_json_file(dir.join("missing.json"), &missing, &mut written)?;
    Ok(written)
}
