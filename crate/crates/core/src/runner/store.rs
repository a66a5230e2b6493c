//! Append-only result store for resumable campaigns.
//!
//! Layout: `store.json` holds the design hash and row count,
//! `results.jsonl` holds one JSON run record per line. Later records for a
//! run id supersede earlier ones.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::{EvaluationSet, RunRecord, RunStatus};

pub const INDEX_FILE: &str = "store.json";
pub const RESULTS_FILE: &str = "results.jsonl";
pub const CANONICAL_FILE: &str = "evaluations.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct StoreIndex {
    design_hash: String,
    rows: usize,
}

#[derive(Debug)]
pub struct ResultStore {
    dir: PathBuf,
    design_hash: String,
    records: BTreeMap<usize, RunRecord>,
    writer: Mutex<File>,
}

fn store_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Store {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

impl ResultStore {
    /// Open or create a store bound to one design. A store created for a
    /// different design is refused.
    pub fn open(dir: impl AsRef<Path>, design_hash: &str, rows: usize) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        std::fs::create_dir_all(&dir)?;
        let index_path = dir.join(INDEX_FILE);
        if index_path.exists() {
            let index: StoreIndex = serde_json::from_str(&std::fs::read_to_string(&index_path)?)
                .map_err(|e| store_err(&index_path, format!("unreadable index: {e}")))?;
            if index.design_hash != design_hash || index.rows != rows {
                return Err(store_err(
                    &index_path,
                    format!(
                        "store belongs to design {} ({} rows), not {design_hash} ({rows} rows)",
                        index.design_hash, index.rows
                    ),
                ));
            }
        } else {
            let index = StoreIndex {
                design_hash: design_hash.to_string(),
                rows,
            };
            std::fs::write(&index_path, serde_json::to_string_pretty(&index)? + "\n")?;
        }

        let results_path = dir.join(RESULTS_FILE);
        let records = load_records(&results_path, rows)?;
        let writer = OpenOptions::new().create(true).append(true).open(&results_path)?;
        Ok(ResultStore {
            dir,
            design_hash: design_hash.to_string(),
            records,
            writer: Mutex::new(writer),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Records loaded when the store was opened.
    pub fn records(&self) -> &BTreeMap<usize, RunRecord> {
        &self.records
    }

    /// Append a batch of records. Each record is written as one complete line.
    pub fn append(&self, records: &[RunRecord]) -> Result<()> {
        let mut buf = Vec::new();
        for r in records {
            serde_json::to_writer(&mut buf, r)?;
            buf.push(b'\n');
        }
        let mut file = self.writer.lock().unwrap_or_else(|p| p.into_inner());
        file.write_all(&buf)?;
        file.flush()?;
        Ok(())
    }

    /// Close the store: rewrite the journal in run-id order and write the
    /// canonical evaluations file next to it. Store contents then depend
    /// only on the results, not on the completion order of parallel batches.
    pub fn finish(self, evals: &EvaluationSet) -> Result<PathBuf> {
        if evals.design_hash != self.design_hash {
            return Err(store_err(&self.dir, "evaluation set belongs to another design"));
        }
        drop(self.writer);
        let journal = self.dir.join(RESULTS_FILE);
        let tmp = self.dir.join(format!("{RESULTS_FILE}.tmp"));
        let mut w = BufWriter::new(File::create(&tmp)?);
        for r in evals.rows.values().filter(|r| r.status != RunStatus::Pending) {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        w.into_inner().map_err(|e| e.into_error())?.sync_all()?;
        std::fs::rename(&tmp, &journal)?;

        let path = self.dir.join(CANONICAL_FILE);
        let tmp = self.dir.join(format!("{CANONICAL_FILE}.tmp"));
        evals.write_csv(BufWriter::new(File::create(&tmp)?))?;
        std::fs::rename(&tmp, &path)?;
        Ok(path)
    }
}

/// Read the journal, cutting off a torn final record left by an interrupt.
fn load_records(path: &Path, rows: usize) -> Result<BTreeMap<usize, RunRecord>> {
    let mut records = BTreeMap::new();
    let bytes = match std::fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(records),
        Err(e) => return Err(e.into()),
    };
    let mut offset = 0usize;
    let mut good_end = 0usize;
    let mut line_no = 0usize;
    while offset < bytes.len() {
        line_no += 1;
        let end = bytes[offset..].iter().position(|&b| b == b'\n').map(|p| offset + p);
        let line = &bytes[offset..end.unwrap_or(bytes.len())];
        let parsed = std::str::from_utf8(line)
            .ok()
            .and_then(|s| serde_json::from_str::<RunRecord>(s).ok());
        match (parsed, end) {
            (Some(rec), Some(end)) => {
                if rec.run_id >= rows {
                    return Err(store_err(path, format!("line {line_no}: run_id {} out of range", rec.run_id)));
                }
                records.insert(rec.run_id, rec);
                offset = end + 1;
                good_end = offset;
            }
            (_, None) => {
                log::warn!(
                    "{}: discarding incomplete final record at line {line_no}",
                    path.display()
                );
                OpenOptions::new().write(true).open(path)?.set_len(good_end as u64)?;
                break;
            }
            (None, Some(_)) => {
                return Err(store_err(path, format!("line {line_no}: corrupt record")));
            }
        }
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ok(id: usize, y: f64) -> RunRecord {
        RunRecord::ok(id, BTreeMap::from([("y".to_string(), y)]))
    }

    #[test]
    fn append_and_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let s = ResultStore::open(dir.path(), "abc", 4).unwrap();
        s.append(&[ok(0, 1.0), RunRecord::failed(1, "boom")]).unwrap();
        s.append(&[ok(1, 2.0)]).unwrap();
        drop(s);
        let s = ResultStore::open(dir.path(), "abc", 4).unwrap();
        assert_eq!(s.records().len(), 2);
        assert_eq!(s.records()[&1], ok(1, 2.0));
    }

    #[test]
    fn refuses_other_design() {
        let dir = tempfile::tempdir().unwrap();
        ResultStore::open(dir.path(), "abc", 4).unwrap();
        let err = ResultStore::open(dir.path(), "def", 4).unwrap_err();
        assert_eq!(err.exit_code(), 4);
    }

    #[test]
    fn torn_tail_is_truncated() {
        let dir = tempfile::tempdir().unwrap();
        let s = ResultStore::open(dir.path(), "abc", 4).unwrap();
        s.append(&[ok(0, 1.0), ok(1, 2.0)]).unwrap();
        drop(s);
        let path = dir.path().join(RESULTS_FILE);
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(br#"{"run_id":2,"status":"o"#).unwrap();
        drop(f);
        let s = ResultStore::open(dir.path(), "abc", 4).unwrap();
        assert_eq!(s.records().len(), 2);
        s.append(&[ok(2, 3.0)]).unwrap();
        drop(s);
        let s = ResultStore::open(dir.path(), "abc", 4).unwrap();
        assert_eq!(s.records()[&2], ok(2, 3.0));
    }

    #[test]
    fn corrupt_middle_line_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        ResultStore::open(dir.path(), "abc", 4).unwrap();
        std::fs::write(dir.path().join(RESULTS_FILE), "garbage\n{\"run_id\":0,\"status\":\"ok\"}\n").unwrap();
        assert!(ResultStore::open(dir.path(), "abc", 4).is_err());
    }
}
