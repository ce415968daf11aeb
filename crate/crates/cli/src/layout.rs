//! On-disk layout of runs.
//!
//! ```text
//! <runs>/<config hash>/config.json            canonical config snapshot
//! <runs>/<config hash>/results.csv            suite results table
//! <runs>/<config hash>/<seed>/<fold>/         one run
//!     run.json  config.json  records.jsonl  status.json  .lock
//!     split/{train,val,test}.json
//!     iter<i>/{selected,annotations,train_report}.json  model.ckpt  scores.csv
//! ```
//!
//! Transfer replays live under `<runs>/<target hash>/from-<source hash>/`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use albench_core::records::IterationRecord;

use crate::error::{Result, RunError};

pub const LOCK_FILE: &str = ".lock";

/// Paths inside one run directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunDir {
    pub root: PathBuf,
}

impl RunDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        RunDir { root: root.into() }
    }

    pub fn for_run(runs_root: &Path, config_hash: &str, seed: u64, fold: usize) -> Self {
        RunDir::new(runs_root.join(config_hash).join(seed.to_string()).join(fold.to_string()))
    }

    pub fn for_replay(
        runs_root: &Path,
        target_hash: &str,
        source_hash: &str,
        seed: u64,
        fold: usize,
    ) -> Self {
        RunDir::new(
            runs_root
                .join(target_hash)
                .join(format!("from-{source_hash}"))
                .join(seed.to_string())
                .join(fold.to_string()),
        )
    }

    pub fn manifest(&self) -> PathBuf {
        self.root.join("run.json")
    }

    pub fn config(&self) -> PathBuf {
        self.root.join("config.json")
    }

    pub fn records(&self) -> PathBuf {
        self.root.join("records.jsonl")
    }

    pub fn status(&self) -> PathBuf {
        self.root.join("status.json")
    }

    pub fn split(&self, role: &str) -> PathBuf {
        self.root.join("split").join(format!("{role}.json"))
    }

    pub fn iter_dir(&self, i: usize) -> PathBuf {
        self.root.join(format!("iter{i}"))
    }

    pub fn selected(&self, i: usize) -> PathBuf {
        self.iter_dir(i).join("selected.json")
    }

    pub fn annotations(&self, i: usize) -> PathBuf {
        self.iter_dir(i).join("annotations.json")
    }

    pub fn checkpoint(&self, i: usize) -> PathBuf {
        self.iter_dir(i).join("model.ckpt")
    }

    pub fn train_report(&self, i: usize) -> PathBuf {
        self.iter_dir(i).join("train_report.json")
    }

    pub fn scores(&self, i: usize) -> PathBuf {
        self.iter_dir(i).join("scores.csv")
    }

    /// Path relative to the run root, for references stored in records.
    pub fn relative(&self, path: &Path) -> String {
        path.strip_prefix(&self.root)
            .unwrap_or(path)
            .display()
            .to_string()
    }

    pub fn read_records(&self) -> Result<Vec<IterationRecord>> {
        let path = self.records();
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(RunError::io(format!("reading {}", path.display()), e)),
        };
        let mut out = Vec::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            out.push(serde_json::from_str(line)?);
        }
        Ok(out)
    }

    pub fn write_records(&self, records: &[IterationRecord]) -> Result<()> {
        let mut text = String::new();
        for r in records {
            text.push_str(&serde_json::to_string(r)?);
            text.push('\n');
        }
        write_atomic(&self.records(), text.as_bytes())
    }

    pub fn append_record(&self, record: &IterationRecord) -> Result<()> {
        let path = self.records();
        let mut f = fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| RunError::io(format!("opening {}", path.display()), e))?;
        let mut line = serde_json::to_string(record)?;
        line.push('\n');
        f.write_all(line.as_bytes())
            .and_then(|_| f.sync_data())
            .map_err(|e| RunError::io(format!("appending to {}", path.display()), e))
    }

    pub fn read_status(&self) -> Result<Option<RunStatus>> {
        read_json_opt(&self.status())
    }

    pub fn write_status(&self, status: &RunStatus) -> Result<()> {
        write_json(&self.status(), status)
    }

    pub fn read_manifest(&self) -> Result<RunManifest> {
        read_json_opt(&self.manifest())?.ok_or_else(|| RunError::Resume {
            dir: self.root.clone(),
            reason: "no run.json; not a run directory".into(),
        })
    }
}

/// Identity of a run, written once when the run directory is created.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub seed: u64,
    pub fold: usize,
    /// Set for transfer replays.
    #[serde(default)]
    pub source: Option<ReplaySource>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplaySource {
    pub config_hash: String,
    pub run_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum RunStatus {
    Running,
    Complete { iterations: usize },
    /// Fewer unlabeled samples than the budget were left.
    BudgetExhausted {
        iteration: usize,
        budget: usize,
        unlabeled: usize,
    },
    Failed { message: String },
}

impl RunStatus {
    /// A finished run is never re-executed by a suite.
    pub fn is_finished(&self) -> bool {
        matches!(self, RunStatus::Complete { .. } | RunStatus::BudgetExhausted { .. })
    }
}

/// Exclusive ownership of a run directory for the lifetime of the value.
#[derive(Debug)]
pub struct RunLock {
    path: PathBuf,
}

impl RunLock {
    pub fn acquire(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| RunError::io(format!("creating {}", dir.display()), e))?;
        let path = dir.join(LOCK_FILE);
        match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(RunLock { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(RunError::Locked {
                dir: dir.to_path_buf(),
            }),
            Err(e) => Err(RunError::io(format!("creating {}", path.display()), e)),
        }
    }
}

impl Drop for RunLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

/// Writes through a temporary file and a rename, so readers never see a
/// half-written file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)
            .map_err(|e| RunError::io(format!("creating {}", parent.display()), e))?;
    }
    let tmp = path.with_extension("partial");
    fs::write(&tmp, bytes).map_err(|e| RunError::io(format!("writing {}", tmp.display()), e))?;
    fs::rename(&tmp, path).map_err(|e| RunError::io(format!("renaming to {}", path.display()), e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

pub fn read_json_opt<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Option<T>> {
    match fs::read_to_string(path) {
        Ok(text) => Ok(Some(serde_json::from_str(&text)?)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(RunError::io(format!("reading {}", path.display()), e)),
    }
}
