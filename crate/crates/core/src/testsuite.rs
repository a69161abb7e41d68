//! Extraction of code from model responses, syntax checking and test discovery.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::promptgen::{RagMode, TestBudget};
use crate::pytool::{PyToolError, PythonTool};

#[derive(Debug, Error)]
pub enum SuiteError {
    #[error("source does not parse: {0}")]
    Unparsable(String),
    #[error(transparent)]
    Tool(#[from] PyToolError),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ExtractOptions {
    /// Also capture unfenced runs of code-looking lines when no fence exists.
    pub prose_fallback: bool,
}

const LANGUAGE_TAGS: [&str; 3] = ["python", "py", "python3"];

struct Fence<'a> {
    tag: &'a str,
    lines: Vec<&'a str>,
}

fn fences(text: &str) -> Vec<Fence<'_>> {
    let mut out = Vec::new();
    let mut current: Option<Fence<'_>> = None;
    for line in text.lines() {
        let trimmed = line.trim_start();
        if let Some(info) = trimmed.strip_prefix("```") {
            match current.take() {
                Some(f) => out.push(f),
                None => {
                    current = Some(Fence {
                        tag: info.split_whitespace().next().unwrap_or(""),
                        lines: Vec::new(),
                    })
                }
            }
            continue;
        }
        if let Some(f) = current.as_mut() {
            f.lines.push(line);
        }
    }
    // an unterminated fence runs to the end of the response
    out.extend(current);
    out
}

fn first_line_parses(lines: &[&str], tool: &PythonTool) -> Result<bool, PyToolError> {
    let Some(first) = lines.iter().find(|l| !l.trim().is_empty()) else {
        return Ok(false);
    };
    let first = first.trim();
    let probe = if first.ends_with(':') {
        format!("{first}\n    pass\n")
    } else {
        format!("{first}\n")
    };
    Ok(tool.analyze(&probe)?.parse_ok)
}

fn code_line_pattern() -> &'static Regex {
    static PATTERN: OnceLock<Regex> = OnceLock::new();
    PATTERN.get_or_init(|| {
        Regex::new(
            r"^(?:\s+\S|import \w|from [\w.]+ import |class \w+|def \w+\(|async def |@\w|if __name__|[A-Za-z_][\w.\[\], ]*\s*[-+*/]?=[^=]|[A-Za-z_][\w.]*\(.*\)\s*$|#)",
        )
        .expect("code line regex")
    })
}

fn prose_code_runs(text: &str) -> String {
    let pattern = code_line_pattern();
    let mut runs: Vec<Vec<&str>> = Vec::new();
    let mut current: Vec<&str> = Vec::new();
    for line in text.lines() {
        // blank lines stay inside a run that has started
        if pattern.is_match(line) || (line.trim().is_empty() && !current.is_empty()) {
            current.push(line);
        } else if !current.is_empty() {
            runs.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        runs.push(current);
    }
    runs.into_iter()
        .map(|mut r| {
            while r.last().is_some_and(|l| l.trim().is_empty()) {
                r.pop();
            }
            r.join("\n") + "\n"
        })
        .collect()
}

/// Concatenates, in order, every fenced block tagged as Python plus every
/// untagged block whose first line parses as Python.
pub fn extract_code(response: &str, tool: &PythonTool) -> Result<String, PyToolError> {
    extract_code_with(response, tool, ExtractOptions::default())
}

pub fn extract_code_with(response: &str, tool: &PythonTool, options: ExtractOptions) -> Result<String, PyToolError> {
    let all = fences(response);
    let mut out = String::new();
    for fence in &all {
        let tagged = LANGUAGE_TAGS.iter().any(|t| fence.tag.eq_ignore_ascii_case(t));
        let keep = tagged || (fence.tag.is_empty() && first_line_parses(&fence.lines, tool)?);
        if keep {
            for line in &fence.lines {
                out.push_str(line);
                out.push('\n');
            }
        }
    }
    if all.is_empty() && options.prose_fallback {
        out = prose_code_runs(response);
    }
    Ok(out)
}

/// True iff `source` is a non-empty, syntactically valid module.
pub fn check_syntax(source: &str, tool: &PythonTool) -> Result<bool, PyToolError> {
    Ok(tool.analyze(source)?.parse_ok)
}

/// `test*` methods of unittest test-case classes, in source order.
pub fn enumerate_tests(source: &str, tool: &PythonTool) -> Result<Vec<String>, SuiteError> {
    let a = tool.analyze(source)?;
    if !a.parse_ok {
        return Err(SuiteError::Unparsable(a.error.unwrap_or_default()));
    }
    Ok(a.tests)
}

/// Identifies one generation: (model, project, mode, budget, api).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellKey {
    pub model_id: String,
    pub project: String,
    pub mode: RagMode,
    pub budget: TestBudget,
    pub api_name: String,
}

impl CellKey {
    pub fn run_id(&self) -> String {
        format!(
            "{}/{}/{}/{}/{}",
            self.model_id, self.project, self.mode, self.budget, self.api_name
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratedSuite {
    pub cell: CellKey,
    pub source: String,
    pub parse_ok: bool,
    pub test_names: Vec<String>,
    #[serde(default)]
    pub parse_error: Option<String>,
}

impl GeneratedSuite {
    pub fn from_response(cell: CellKey, response: &str, tool: &PythonTool, options: ExtractOptions) -> Result<Self, PyToolError> {
        let source = extract_code_with(response, tool, options)?;
        let analysis = tool.analyze(&source)?;
        Ok(GeneratedSuite {
            cell,
            source,
            parse_ok: analysis.parse_ok,
            test_names: if analysis.parse_ok { analysis.tests } else { Vec::new() },
            parse_error: analysis.error,
        })
    }

    pub fn run_id(&self) -> String {
        self.cell.run_id()
    }
}
