//! Bridge to the subject-language interpreter.
//!
//! Syntax checks, test discovery and the executable-line model all use the
//! interpreter's own `ast` module, through one long-lived helper process
//! that answers JSON-lines requests.

use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::Mutex;

use serde::Deserialize;
use serde_json::json;
use thiserror::Error;

pub(crate) const SUPPORT_SCRIPT: &str = include_str!("../assets/pysupport.py");

#[derive(Debug, Error)]
pub enum PyToolError {
    #[error("failed to start {python}: {source}")]
    Spawn { python: String, source: std::io::Error },
    #[error("helper process: {0}")]
    Protocol(String),
    #[error("{0}")]
    Remote(String),
}

/// Result of parsing one candidate suite.
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct SourceAnalysis {
    pub parse_ok: bool,
    pub tests: Vec<String>,
    #[serde(default)]
    pub error: Option<String>,
}

struct Session {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

impl Drop for Session {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Handle on a helper interpreter process; safe to share between threads.
pub struct PythonTool {
    python: PathBuf,
    session: Mutex<Option<Session>>,
}

impl PythonTool {
    pub fn new(python: impl Into<PathBuf>) -> Self {
        PythonTool {
            python: python.into(),
            session: Mutex::new(None),
        }
    }

    /// Interpreter from `RAGTEST_PYTHON`, else `python3`.
    pub fn from_env() -> Self {
        PythonTool::new(default_python())
    }

    pub fn python(&self) -> &Path {
        &self.python
    }

    fn spawn(&self) -> Result<Session, PyToolError> {
        let mut child = Command::new(&self.python)
            .args(["-B", "-c", SUPPORT_SCRIPT, "serve"])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|source| PyToolError::Spawn {
                python: self.python.display().to_string(),
                source,
            })?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        Ok(Session { child, stdin, stdout })
    }

    fn request(&self, req: serde_json::Value) -> Result<serde_json::Value, PyToolError> {
        let mut guard = self.session.lock().map_err(|_| PyToolError::Protocol("session lock poisoned".into()))?;
        // one respawn if the previous helper died
        for attempt in 0..2 {
            if guard.is_none() {
                *guard = Some(self.spawn()?);
            }
            let session = guard.as_mut().expect("session present");
            let mut line = req.to_string();
            line.push('\n');
            let mut reply = String::new();
            let ok = session.stdin.write_all(line.as_bytes()).is_ok()
                && session.stdin.flush().is_ok()
                && session.stdout.read_line(&mut reply).is_ok_and(|n| n > 0);
            if ok {
                let value: serde_json::Value =
                    serde_json::from_str(&reply).map_err(|e| PyToolError::Protocol(e.to_string()))?;
                if let Some(err) = value.get("error").and_then(|e| e.as_str()) {
                    if value.get("parse_ok").is_none() {
                        return Err(PyToolError::Remote(err.to_owned()));
                    }
                }
                return Ok(value);
            }
            *guard = None;
            if attempt == 1 {
                break;
            }
        }
        Err(PyToolError::Protocol("helper process exited".into()))
    }

    pub fn analyze(&self, source: &str) -> Result<SourceAnalysis, PyToolError> {
        let v = self.request(json!({"op": "analyze", "source": source}))?;
        serde_json::from_value(v).map_err(|e| PyToolError::Protocol(e.to_string()))
    }

    /// Executable statement lines of a source file.
    pub fn executable_lines(&self, path: &Path) -> Result<Vec<u32>, PyToolError> {
        let v = self.request(json!({"op": "line_model", "path": path}))?;
        serde_json::from_value(v["executable"].clone()).map_err(|e| PyToolError::Protocol(e.to_string()))
    }

    /// Inclusive line span of a top-level or nested class definition.
    pub fn class_span(&self, path: &Path, class_name: &str) -> Result<Option<(u32, u32)>, PyToolError> {
        let v = self.request(json!({"op": "class_span", "path": path, "class_name": class_name}))?;
        serde_json::from_value(v["span"].clone()).map_err(|e| PyToolError::Protocol(e.to_string()))
    }
}

pub fn default_python() -> PathBuf {
    std::env::var_os("RAGTEST_PYTHON")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("python3"))
}
