//! Results store: every run directory under `<root>/runs` holds its own
//! `record.json`; `<root>/index.json` is a cache rebuilt by scanning.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::regimen::{read_record, RunRecord, RECORD_FILE, TIMINGS_FILE};
use crate::{Error, Result};

pub const INDEX_FILE: &str = "index.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub name: String,
    pub path: String,
    pub status: String,
    /// Primary metric per evaluation target.
    pub f1: BTreeMap<String, f64>,
    /// Total stage wall time, when the run left a timings file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time_ms: Option<u64>,
}

fn collect(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths: Vec<PathBuf> = entries.filter_map(|e| e.ok().map(|e| e.path())).collect();
    paths.sort();
    for p in paths {
        if p.is_dir() {
            if p.file_name().is_some_and(|n| n == "checkpoints" || n == "predictions") {
                continue;
            }
            if p.join(RECORD_FILE).is_file() {
                out.push(p);
            } else {
                collect(&p, out)?;
            }
        }
    }
    Ok(())
}

/// All run records under `root`, sorted by run directory.
pub fn scan_runs(root: &Path) -> Result<Vec<(PathBuf, RunRecord)>> {
    let runs = root.join("runs");
    if !runs.is_dir() {
        return Ok(Vec::new());
    }
    let mut dirs = Vec::new();
    collect(&runs, &mut dirs)?;
    dirs.into_iter().map(|d| read_record(&d).map(|r| (d, r))).collect()
}

/// Rebuilds `index.json` from the run directories.
pub fn rebuild_index(root: &Path) -> Result<Vec<IndexEntry>> {
    let entries: Vec<IndexEntry> = scan_runs(root)?
        .into_iter()
        .map(|(dir, r)| IndexEntry {
            path: dir.strip_prefix(root).unwrap_or(&dir).to_string_lossy().replace('\\', "/"),
            status: if r.is_completed() { "completed".into() } else { "failed".into() },
            f1: r.metrics.iter().map(|(k, m)| (k.clone(), m.primary())).collect(),
            wall_time_ms: std::fs::read(dir.join(TIMINGS_FILE))
                .ok()
                .and_then(|b| serde_json::from_slice::<Vec<u64>>(&b).ok())
                .map(|t| t.iter().sum()),
            name: r.name,
        })
        .collect();
    std::fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    let path = root.join(INDEX_FILE);
    let mut bytes = serde_json::to_vec_pretty(&entries).expect("index serializes");
    bytes.push(b'\n');
    std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
    Ok(entries)
}
