//! Model outputs aligned with a design, keyed by run id.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::design::Design;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Ok,
    Failed,
    Pending,
}

impl fmt::Display for RunStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RunStatus::Ok => "ok",
            RunStatus::Failed => "failed",
            RunStatus::Pending => "pending",
        })
    }
}

impl FromStr for RunStatus {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "ok" => Ok(RunStatus::Ok),
            "failed" => Ok(RunStatus::Failed),
            "pending" => Ok(RunStatus::Pending),
            _ => Err(format!("unknown run status `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: usize,
    pub status: RunStatus,
    #[serde(default)]
    pub metrics: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
}

impl RunRecord {
    pub fn ok(run_id: usize, metrics: BTreeMap<String, f64>) -> Self {
        RunRecord {
            run_id,
            status: RunStatus::Ok,
            metrics,
            diagnostic: None,
        }
    }

    pub fn failed(run_id: usize, diagnostic: impl Into<String>) -> Self {
        RunRecord {
            run_id,
            status: RunStatus::Failed,
            metrics: BTreeMap::new(),
            diagnostic: Some(diagnostic.into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationSet {
    pub design_hash: String,
    pub rows: BTreeMap<usize, RunRecord>,
}

impl EvaluationSet {
    pub fn new(design_hash: impl Into<String>) -> Self {
        EvaluationSet {
            design_hash: design_hash.into(),
            rows: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, record: RunRecord) {
        self.rows.insert(record.run_id, record);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn status(&self, run_id: usize) -> RunStatus {
        self.rows
            .get(&run_id)
            .map_or(RunStatus::Pending, |r| r.status)
    }

    /// Metric value of an `ok` run; `None` for failed, pending or missing.
    pub fn value(&self, run_id: usize, metric: &str) -> Option<f64> {
        self.rows
            .get(&run_id)
            .filter(|r| r.status == RunStatus::Ok)
            .and_then(|r| r.metrics.get(metric).copied())
    }

    /// Sorted union of metric names over `ok` rows.
    pub fn metric_names(&self) -> Vec<String> {
        let names: BTreeSet<&String> = self
            .rows
            .values()
            .filter(|r| r.status == RunStatus::Ok)
            .flat_map(|r| r.metrics.keys())
            .collect();
        names.into_iter().cloned().collect()
    }

    pub fn count(&self, status: RunStatus) -> usize {
        self.rows.values().filter(|r| r.status == status).count()
    }

    /// Checks that this set was produced from `design` and covers every row.
    pub fn check_alignment(&self, design: &Design) -> Result<()> {
        self.check_alignment_with(&design.content_hash(), design.rows())
    }

    pub fn check_alignment_with(&self, hash: &str, rows: usize) -> Result<()> {
        if self.design_hash != hash {
            return Err(Error::Alignment(format!(
                "evaluations belong to design {} but the design hash is {}",
                self.design_hash, hash
            )));
        }
        if let Some(extra) = self.rows.keys().find(|&&id| id >= rows) {
            return Err(Error::Alignment(format!(
                "run_id {extra} is outside the design ({rows} rows)"
            )));
        }
        if let Some(missing) = (0..rows).find(|id| !self.rows.contains_key(id)) {
            return Err(Error::Alignment(format!(
                "missing evaluation for run_id {missing} ({} of {rows} rows present)",
                self.rows.len()
            )));
        }
        Ok(())
    }

    pub fn require_metric(&self, metric: &str) -> Result<()> {
        if self.metric_names().iter().any(|m| m == metric) {
            Ok(())
        } else {
            Err(Error::Schema(format!(
                "metric `{metric}` not present (available: {})",
                self.metric_names().join(", ")
            )))
        }
    }

    /// Canonical table sorted by run id:
    /// `# design_hash=<hex>` then `run_id,status,<metrics...>,diagnostic`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# design_hash={}", self.design_hash)?;
        let metrics = self.metric_names();
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["run_id".to_string(), "status".to_string()];
        header.extend(metrics.iter().cloned());
        header.push("diagnostic".into());
        w.write_record(&header)?;
        for rec in self.rows.values() {
            let mut fields = vec![rec.run_id.to_string(), rec.status.to_string()];
            fields.extend(
                metrics
                    .iter()
                    .map(|m| rec.metrics.get(m).map(f64::to_string).unwrap_or_default()),
            );
            fields.push(rec.diagnostic.clone().unwrap_or_default());
            w.write_record(&fields)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv output is utf-8")
    }

    pub fn write_path(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv_string())?;
        Ok(())
    }

    pub fn parse_csv(text: &str, source: &str) -> Result<Self> {
        let parse_err = |line: usize, message: String| Error::Parse {
            path: source.to_string(),
            line,
            message,
        };
        let (first, rest) = text.split_once('\n').unwrap_or((text, ""));
        let hash = first
            .trim()
            .strip_prefix("# design_hash=")
            .ok_or_else(|| parse_err(1, "expected `# design_hash=<hex>` first line".into()))?;
        let mut set = EvaluationSet::new(hash);

        let mut reader = csv::ReaderBuilder::new().from_reader(rest.as_bytes());
        let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
        if header.len() < 3
            || header[0] != "run_id"
            || header[1] != "status"
            || header.last().map(String::as_str) != Some("diagnostic")
        {
            return Err(parse_err(
                2,
                "header must be run_id,status,<metrics...>,diagnostic".into(),
            ));
        }
        let metrics = &header[2..header.len() - 1];
        for (idx, rec) in reader.records().enumerate() {
            let line = idx + 3;
            let rec = rec?;
            let run_id = rec[0]
                .parse::<usize>()
                .map_err(|e| parse_err(line, format!("run_id: {e}")))?;
            let status: RunStatus = rec[1].parse().map_err(|m| parse_err(line, m))?;
            let mut values = BTreeMap::new();
            for (name, raw) in metrics.iter().zip(rec.iter().skip(2)) {
                if raw.is_empty() {
                    continue;
                }
                let v = raw
                    .parse::<f64>()
                    .map_err(|e| parse_err(line, format!("{name}: {e}")))?;
                values.insert(name.clone(), v);
            }
            let diagnostic = rec
                .get(header.len() - 1)
                .filter(|s| !s.is_empty())
                .map(str::to_string);
            if set.rows.contains_key(&run_id) {
                return Err(parse_err(line, format!("duplicate run_id {run_id}")));
            }
            set.insert(RunRecord {
                run_id,
                status,
                metrics: values,
                diagnostic,
            });
        }
        Ok(set)
    }

    pub fn read_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        EvaluationSet::parse_csv(&std::fs::read_to_string(path)?, &path.display().to_string())
    }
}
