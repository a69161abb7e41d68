//! Isolated execution of generated suites with line tracing, runner-log
//! classification and class-scoped coverage.
//!
//! Each suite runs in its own interpreter process, process group, working
//! directory and temp directory, with a scrubbed environment. The process
//! is killed when the timeout expires. The text log written by the standard
//! unittest runner is the authority for per-test status; the structured
//! result file written by the harness is only used to cross-check it.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::ApiRecord;
use crate::pytool::{PyToolError, PythonTool, SUPPORT_SCRIPT};
use crate::testsuite::GeneratedSuite;

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(300);

#[derive(Debug, Error)]
pub enum ExecError {
    #[error("suite {0} did not parse; nothing to execute")]
    Unparsable(String),
    #[error("failed to start interpreter {python}: {source}")]
    Spawn { python: String, source: std::io::Error },
    #[error("source file {0} not found in coverage data or on disk")]
    MissingSource(String),
    #[error("malformed artifact {path}: {message}")]
    Artifact { path: String, message: String },
    #[error(transparent)]
    Tool(#[from] PyToolError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone)]
pub struct EnvConfig {
    pub python: PathBuf,
    /// Directory placed on the module path; only files below it are traced.
    pub source_root: PathBuf,
    pub work_root: PathBuf,
    pub timeout: Duration,
}

impl EnvConfig {
    pub fn new(source_root: impl Into<PathBuf>, work_root: impl Into<PathBuf>) -> Self {
        EnvConfig {
            python: crate::pytool::default_python(),
            source_root: source_root.into(),
            work_root: work_root.into(),
            timeout: DEFAULT_TIMEOUT,
        }
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestStatus {
    Passed,
    Failed,
    Errored,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionOutcome {
    pub run_id: String,
    pub statuses: BTreeMap<String, TestStatus>,
    pub runner_completed: bool,
    pub timed_out: bool,
    pub wall_time_secs: f64,
    /// False when the runner log's counts could not be reconciled.
    pub log_reliable: bool,
    /// Whether the structured result file agreed with the log, when present.
    pub results_agree: Option<bool>,
}

impl ExecutionOutcome {
    pub fn count(&self, status: TestStatus) -> usize {
        self.statuses.values().filter(|s| **s == status).count()
    }

    pub fn total(&self) -> usize {
        self.statuses.len()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileCoverage {
    pub executed: BTreeSet<u32>,
    pub executable: BTreeSet<u32>,
}

/// Per-file traced lines, keyed by path relative to the source root.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoverageRaw {
    pub files: BTreeMap<String, FileCoverage>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageRecord {
    pub per_file: BTreeMap<String, BTreeSet<u32>>,
    pub class_file: String,
    pub class_executable_lines: BTreeSet<u32>,
    pub class_covered_lines: BTreeSet<u32>,
    pub class_covered: usize,
    pub class_executable: usize,
    pub class_coverage_pct: f64,
}

#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub run_dir: PathBuf,
    pub outcome: ExecutionOutcome,
    pub log: String,
    pub coverage: Option<CoverageRaw>,
}

// ============================================================================
// Runner log parsing
// ============================================================================

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogParse {
    pub statuses: BTreeMap<String, TestStatus>,
    /// A `Ran N tests` summary with a final OK/FAILED line was found.
    pub summary_present: bool,
    pub reliable: bool,
}

fn header_pattern() -> &'static Regex {
    static P: OnceLock<Regex> = OnceLock::new();
    P.get_or_init(|| Regex::new(r"(?m)^(FAIL|ERROR): (\S+) \(([^)]*)\)").expect("regex"))
}

fn ran_pattern() -> &'static Regex {
    static P: OnceLock<Regex> = OnceLock::new();
    P.get_or_init(|| Regex::new(r"(?m)^Ran (\d+) tests? in ").expect("regex"))
}

fn verdict_pattern() -> &'static Regex {
    static P: OnceLock<Regex> = OnceLock::new();
    P.get_or_init(|| Regex::new(r"(?m)^(OK|FAILED)(?: \(([^)]*)\))?\s*$").expect("regex"))
}

/// Resolves a runner header to one of the discovered test names.
fn resolve<'a>(method: &str, location: &str, test_names: &'a [String]) -> Option<&'a String> {
    // location is `module.Class` or `module.Class.method`
    let location = location.strip_suffix(&format!(".{method}")).unwrap_or(location);
    let class = location.rsplit('.').next().unwrap_or(location);
    let qualified = format!("{class}.{method}");
    test_names
        .iter()
        .find(|n| **n == qualified)
        .or_else(|| test_names.iter().find(|n| *n == method))
}

/// Classifies every discovered test from the unittest text runner's output.
pub fn parse_runner_log(log: &str, test_names: &[String]) -> LogParse {
    let mut marked: BTreeMap<&String, TestStatus> = BTreeMap::new();
    let (mut fail_headers, mut error_headers, mut unknown_headers) = (0usize, 0usize, 0usize);
    for cap in header_pattern().captures_iter(log) {
        let status = if &cap[1] == "FAIL" { TestStatus::Failed } else { TestStatus::Errored };
        match status {
            TestStatus::Failed => fail_headers += 1,
            _ => error_headers += 1,
        }
        match resolve(&cap[2], &cap[3], test_names) {
            Some(name) => {
                let entry = marked.entry(name).or_insert(status);
                *entry = (*entry).max(status);
            }
            None => unknown_headers += 1,
        }
    }

    let ran: Option<usize> = ran_pattern()
        .captures_iter(log)
        .last()
        .and_then(|c| c[1].parse().ok());
    let verdict = verdict_pattern().captures_iter(log).last();
    let summary_present = ran.is_some() && verdict.is_some();

    let mut reliable = false;
    if let (Some(ran), Some(v)) = (ran, &verdict) {
        let (mut failures, mut errors) = (0usize, 0usize);
        if let Some(detail) = v.get(2) {
            for part in detail.as_str().split(',') {
                if let Some((k, n)) = part.trim().split_once('=') {
                    let n: usize = n.trim().parse().unwrap_or(0);
                    match k.trim() {
                        "failures" => failures = n,
                        "errors" => errors = n,
                        _ => {}
                    }
                }
            }
        }
        let verdict_ok = &v[1] == "OK";
        reliable = unknown_headers == 0
            && ran == test_names.len()
            && failures == fail_headers
            && errors == error_headers
            && (verdict_ok == (failures + errors == 0));
    }

    let statuses = test_names
        .iter()
        .map(|name| {
            let status = marked.get(name).copied().unwrap_or(if summary_present && reliable {
                TestStatus::Passed
            } else {
                TestStatus::Errored
            });
            (name.clone(), status)
        })
        .collect();
    LogParse {
        statuses,
        summary_present,
        reliable,
    }
}

// ============================================================================
// Running suites
// ============================================================================

fn sanitize(run_id: &str) -> String {
    run_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '.' | '-' | '_' | '/') { c } else { '_' })
        .collect()
}

#[cfg(unix)]
fn kill_tree(child: &mut std::process::Child) {
    // the child leads its own process group
    unsafe {
        libc::kill(-(child.id() as i32), libc::SIGKILL);
    }
    let _ = child.kill();
}

#[cfg(not(unix))]
fn kill_tree(child: &mut std::process::Child) {
    let _ = child.kill();
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Option<T> {
    let text = fs::read_to_string(path).ok()?;
    serde_json::from_str(&text).ok()
}

#[derive(Deserialize)]
struct HarnessResults {
    tests: BTreeMap<String, TestStatus>,
}

fn cross_check(results: &HarnessResults, statuses: &BTreeMap<String, TestStatus>) -> bool {
    statuses.iter().all(|(name, status)| {
        let suffix = format!(".{name}");
        results
            .tests
            .iter()
            .find(|(id, _)| id.ends_with(&suffix))
            .is_some_and(|(_, s)| s == status)
    })
}

/// Writes the suite into a fresh run directory and executes it under the
/// tracing harness. Artifacts: `log.txt`, `coverage.json`, `outcome.json`.
pub fn run_suite(suite: &GeneratedSuite, env: &EnvConfig) -> Result<RunArtifacts, ExecError> {
    if !suite.parse_ok {
        return Err(ExecError::Unparsable(suite.run_id()));
    }
    let run_dir = env.work_root.join(sanitize(&suite.run_id()));
    if run_dir.exists() {
        fs::remove_dir_all(&run_dir)?;
    }
    fs::create_dir_all(run_dir.join("tmp"))?;
    // the child runs inside run_dir, so every path handed to it is absolute
    let run_dir = fs::canonicalize(&run_dir)?;
    let tmp = run_dir.join("tmp");
    let suite_path = run_dir.join("suite.py");
    fs::write(&suite_path, &suite.source)?;
    let log_path = run_dir.join("log.txt");
    let coverage_path = run_dir.join("coverage.json");
    let results_path = run_dir.join("results.json");
    let source_root = fs::canonicalize(&env.source_root)?;

    let log_file = File::create(&log_path)?;
    let mut cmd = Command::new(&env.python);
    cmd.args(["-B", "-c", SUPPORT_SCRIPT, "run"])
        .arg(&suite_path)
        .arg(&source_root)
        .arg(&coverage_path)
        .arg(&results_path)
        .current_dir(&run_dir)
        .env_clear()
        .env("PATH", std::env::var_os("PATH").unwrap_or_default())
        .env("PYTHONPATH", &source_root)
        .env("HOME", &run_dir)
        .env("TMPDIR", &tmp)
        .env("PYTHONHASHSEED", "0")
        .env("PYTHONDONTWRITEBYTECODE", "1")
        .env("PYTHONUNBUFFERED", "1")
        .env("LANG", "C.UTF-8")
        .stdin(Stdio::null())
        .stdout(Stdio::from(log_file.try_clone()?))
        .stderr(Stdio::from(log_file));
    #[cfg(unix)]
    {
        use std::os::unix::process::CommandExt;
        cmd.process_group(0);
    }

    let started = Instant::now();
    let mut child = cmd.spawn().map_err(|source| ExecError::Spawn {
        python: env.python.display().to_string(),
        source,
    })?;
    let deadline = started + env.timeout;
    let mut timed_out = false;
    loop {
        if child.try_wait()?.is_some() {
            break;
        }
        if Instant::now() >= deadline {
            kill_tree(&mut child);
            let _ = child.wait();
            timed_out = true;
            break;
        }
        std::thread::sleep(Duration::from_millis(10));
    }
    let wall_time_secs = started.elapsed().as_secs_f64();

    let log = String::from_utf8_lossy(&fs::read(&log_path)?).into_owned();
    let coverage: Option<CoverageRaw> = if timed_out { None } else { read_json(&coverage_path) };
    let results: Option<HarnessResults> = if timed_out { None } else { read_json(&results_path) };

    let parsed = parse_runner_log(&log, &suite.test_names);
    let runner_completed = parsed.summary_present && !timed_out;
    let statuses = if runner_completed {
        parsed.statuses
    } else {
        // no per-test markers survive a crash or kill: everything unmarked is errored
        parsed
            .statuses
            .into_iter()
            .map(|(n, s)| (n, if s == TestStatus::Passed { TestStatus::Errored } else { s }))
            .collect()
    };
    let outcome = ExecutionOutcome {
        run_id: suite.run_id(),
        results_agree: results.as_ref().filter(|_| runner_completed).map(|r| cross_check(r, &statuses)),
        statuses,
        runner_completed,
        timed_out,
        wall_time_secs,
        log_reliable: parsed.reliable && runner_completed,
    };
    if coverage.is_none() {
        fs::write(&coverage_path, "{\"files\":{}}")?;
    }
    fs::write(
        run_dir.join("outcome.json"),
        serde_json::to_string_pretty(&outcome).map_err(std::io::Error::from)?,
    )?;
    Ok(RunArtifacts {
        run_dir,
        outcome,
        log,
        coverage,
    })
}

// ============================================================================
// Class-scoped coverage
// ============================================================================

/// Line coverage of the class that defines `api`.
///
/// When the defining file was never traced its executable lines come from
/// static analysis and nothing counts as covered.
pub fn measure_class_coverage(
    coverage: Option<&CoverageRaw>,
    api: &ApiRecord,
    source_root: &Path,
    tool: &PythonTool,
) -> Result<CoverageRecord, ExecError> {
    let span = api.class_line_span;
    let traced = coverage.and_then(|c| c.files.get(&api.defining_file));
    let (executable, executed): (BTreeSet<u32>, BTreeSet<u32>) = match traced {
        Some(f) => (f.executable.clone(), f.executed.clone()),
        None => {
            let path = source_root.join(&api.defining_file);
            if !path.is_file() {
                return Err(ExecError::MissingSource(api.defining_file.clone()));
            }
            (tool.executable_lines(&path)?.into_iter().collect(), BTreeSet::new())
        }
    };
    let class_executable_lines: BTreeSet<u32> = executable.into_iter().filter(|l| span.contains(*l)).collect();
    let class_covered_lines: BTreeSet<u32> = executed
        .into_iter()
        .filter(|l| class_executable_lines.contains(l))
        .collect();
    Ok(class_record(
        coverage.map(per_file).unwrap_or_default(),
        api.defining_file.clone(),
        class_executable_lines,
        class_covered_lines,
    ))
}

fn per_file(raw: &CoverageRaw) -> BTreeMap<String, BTreeSet<u32>> {
    raw.files.iter().map(|(k, v)| (k.clone(), v.executed.clone())).collect()
}

pub fn class_record(
    per_file: BTreeMap<String, BTreeSet<u32>>,
    class_file: String,
    class_executable_lines: BTreeSet<u32>,
    class_covered_lines: BTreeSet<u32>,
) -> CoverageRecord {
    let class_executable = class_executable_lines.len();
    let class_covered = class_covered_lines.len();
    let class_coverage_pct = if class_executable == 0 {
        0.0
    } else {
        100.0 * class_covered as f64 / class_executable as f64
    };
    CoverageRecord {
        per_file,
        class_file,
        class_executable_lines,
        class_covered_lines,
        class_covered,
        class_executable,
        class_coverage_pct,
    }
}
