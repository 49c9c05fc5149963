use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::Ablation;
use crate::catalog::TrainingPair;
use crate::encoder::write_atomic;
use crate::error::{Error, Result};
use crate::eval::{emit_report, write_scores, MetricReport, PerQueryScore, ReportFormat};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    Done,
    Skipped,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub status: StageStatus,
    pub seed: u64,
    /// Paths relative to the run directory.
    pub artifacts: Vec<String>,
    pub reports: Vec<String>,
    pub wall_clock_ms: u64,
    pub error: Option<String>,
}

/// Provenance of a run directory. Every listed path exists once its stage
/// is recorded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub seed: u64,
    pub rounds: usize,
    pub ablation: Ablation,
    pub ablation_label: String,
    pub corpus_fingerprint: String,
    pub initial_encoder: String,
    pub initial_policy: String,
    pub stages: Vec<StageRecord>,
    pub last_good_stage: Option<String>,
    pub trajectory: Option<String>,
    pub complete: bool,
}

impl RunManifest {
    pub fn stage(&self, name: &str) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.name == name)
    }

    /// Seeds per stage name.
    pub fn seeds(&self) -> BTreeMap<String, u64> {
        self.stages.iter().map(|s| (s.name.clone(), s.seed)).collect()
    }
}

pub fn read_manifest(dir: impl AsRef<Path>) -> Result<RunManifest> {
    let path = dir.as_ref().join(MANIFEST_FILE);
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| Error::Parse {
        line: e.line(),
        message: format!("{}: {e}", path.display()),
    })
}

pub(crate) struct RunDir {
    root: PathBuf,
}

impl RunDir {
    pub(crate) fn create(root: &Path) -> Result<Self> {
        for sub in ["checkpoints", "datasets", "reports", "logs"] {
            let p = root.join(sub);
            fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
        }
        Ok(Self {
            root: root.to_path_buf(),
        })
    }

    pub(crate) fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub(crate) fn existing_manifest(&self) -> Result<Option<RunManifest>> {
        if self.path(MANIFEST_FILE).exists() {
            read_manifest(&self.root).map(Some)
        } else {
            Ok(None)
        }
    }

    pub(crate) fn write_manifest(&self, m: &RunManifest) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(m).map_err(|e| Error::invalid(e.to_string()))?;
        bytes.push(b'\n');
        write_atomic(&self.path(MANIFEST_FILE), &bytes)
    }

    pub(crate) fn log(&self, line: &str) -> Result<()> {
        let path = self.path("logs/pipeline.log");
        let mut f = fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        writeln!(f, "{line}").map_err(|e| Error::io(&path, e))
    }

    /// Writes CSV, JSON and per-query scores; returns the relative paths.
    pub(crate) fn write_report(
        &self,
        name: &str,
        report: &MetricReport,
        scores: &[PerQueryScore],
    ) -> Result<Vec<String>> {
        let rels = [
            format!("reports/{name}.csv"),
            format!("reports/{name}.json"),
            format!("reports/{name}.scores.jsonl"),
        ];
        emit_report(report, ReportFormat::Csv, self.path(&rels[0]))?;
        emit_report(report, ReportFormat::Json, self.path(&rels[1]))?;
        write_scores(scores, self.path(&rels[2]))?;
        Ok(rels.to_vec())
    }

    pub(crate) fn read_report(&self, name: &str) -> Result<MetricReport> {
        let path = self.path(&format!("reports/{name}.json"));
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_slice(&bytes).map_err(|e| Error::Parse {
            line: e.line(),
            message: format!("{}: {e}", path.display()),
        })
    }
}

pub fn write_dataset(pairs: &[TrainingPair], path: impl AsRef<Path>) -> Result<()> {
    let mut buf = Vec::new();
    for p in pairs {
        serde_json::to_writer(&mut buf, p).map_err(|e| Error::invalid(e.to_string()))?;
        buf.push(b'\n');
    }
    write_atomic(path.as_ref(), &buf)
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Vec<TrainingPair>> {
    let path = path.as_ref();
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })?);
        }
    }
    Ok(out)
}
