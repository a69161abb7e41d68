//! Append-only record of completed and failed stages.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum ManifestEvent {
    CampaignStarted {
        at: u64,
        config_hash: String,
        python_version: String,
        subject_fingerprint: String,
        tool_version: String,
        /// Output cap sent to the model; `None` leaves the provider default.
        #[serde(default)]
        max_output_tokens: Option<u32>,
    },
    StageCompleted {
        at: u64,
        stage: String,
        key: String,
        fingerprint: String,
    },
    StageFailed {
        at: u64,
        stage: String,
        key: String,
        fingerprint: String,
        error: String,
    },
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

/// Stage status per (stage, key), backed by a JSON-lines file.
#[derive(Debug)]
pub struct RunManifest {
    path: PathBuf,
    file: Mutex<File>,
    // latest fingerprint each (stage, key) completed with
    completed: Mutex<HashMap<(String, String), String>>,
}

impl RunManifest {
    /// Opens (creating if needed) and replays an existing manifest. A
    /// truncated trailing line from an interrupted run is ignored.
    pub fn open(path: &Path) -> std::io::Result<Self> {
        let mut completed = HashMap::new();
        if path.exists() {
            for line in BufReader::new(File::open(path)?).lines() {
                let line = line?;
                match serde_json::from_str::<ManifestEvent>(&line) {
                    Ok(ManifestEvent::StageCompleted { stage, key, fingerprint, .. }) => {
                        completed.insert((stage, key), fingerprint);
                    }
                    Ok(ManifestEvent::StageFailed { stage, key, .. }) => {
                        completed.remove(&(stage, key));
                    }
                    Ok(_) => {}
                    Err(e) => log::warn!("{}: skipping unreadable manifest line: {e}", path.display()),
                }
            }
        }
        let mut file = OpenOptions::new().create(true).append(true).open(path)?;
        let bytes = std::fs::read(path)?;
        if bytes.last().is_some_and(|b| *b != b'\n') {
            file.write_all(b"\n")?;
        }
        Ok(RunManifest {
            path: path.to_owned(),
            file: Mutex::new(file),
            completed: Mutex::new(completed),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn is_complete(&self, stage: &str, key: &str, fingerprint: &str) -> bool {
        self.completed
            .lock()
            .expect("manifest lock")
            .get(&(stage.to_owned(), key.to_owned()))
            .is_some_and(|f| f == fingerprint)
    }

    fn append(&self, event: &ManifestEvent) -> std::io::Result<()> {
        let mut line = serde_json::to_string(event)?;
        line.push('\n');
        let mut f = self.file.lock().expect("manifest lock");
        f.write_all(line.as_bytes())?;
        f.flush()
    }

    pub fn started(
        &self,
        config_hash: &str,
        python_version: &str,
        subject_fingerprint: &str,
        max_output_tokens: Option<u32>,
    ) -> std::io::Result<()> {
        self.append(&ManifestEvent::CampaignStarted {
            at: now(),
            config_hash: config_hash.to_owned(),
            python_version: python_version.to_owned(),
            subject_fingerprint: subject_fingerprint.to_owned(),
            tool_version: env!("CARGO_PKG_VERSION").to_owned(),
            max_output_tokens,
        })
    }

    pub fn completed(&self, stage: &str, key: &str, fingerprint: &str) -> std::io::Result<()> {
        self.append(&ManifestEvent::StageCompleted {
            at: now(),
            stage: stage.to_owned(),
            key: key.to_owned(),
            fingerprint: fingerprint.to_owned(),
        })?;
        self.completed
            .lock()
            .expect("manifest lock")
            .insert((stage.to_owned(), key.to_owned()), fingerprint.to_owned());
        Ok(())
    }

    pub fn failed(&self, stage: &str, key: &str, fingerprint: &str, error: &str) -> std::io::Result<()> {
        self.append(&ManifestEvent::StageFailed {
            at: now(),
            stage: stage.to_owned(),
            key: key.to_owned(),
            fingerprint: fingerprint.to_owned(),
            error: error.to_owned(),
        })?;
        self.completed
            .lock()
            .expect("manifest lock")
            .remove(&(stage.to_owned(), key.to_owned()));
        Ok(())
    }

    /// Every event recorded so far, in order.
    pub fn events(&self) -> std::io::Result<Vec<ManifestEvent>> {
        let text = std::fs::read_to_string(&self.path)?;
        Ok(text.lines().filter_map(|l| serde_json::from_str(l).ok()).collect())
    }
}
