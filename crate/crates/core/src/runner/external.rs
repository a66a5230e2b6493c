//! Batch file protocol for external model executables.
//!
//! For every batch the runner writes `run_id,<factor names...>` rows in
//! physical units to an input file and invokes
//! `<program> <args...> <input path> <output path>` with
//! `SENSIKIT_BATCH_SEED` set. The program writes either
//! `run_id,<metric names...>` (scalar protocol) or
//! `run_id,time,<series names...>` in long format (time-series protocol).

use std::collections::BTreeMap;
use std::fs::File;
use std::io::Write;
use std::path::Path;
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::runner::metrics::TimeSeries;
use crate::runner::models::ModelOutput;

pub const SEED_ENV: &str = "SENSIKIT_BATCH_SEED";

pub type BatchOutputs = BTreeMap<usize, std::result::Result<ModelOutput, String>>;

#[derive(Debug, Clone, PartialEq)]
pub struct ExternalModel {
    pub program: String,
    pub args: Vec<String>,
    pub timeout: Option<Duration>,
}

impl ExternalModel {
    pub fn new(program: impl Into<String>, args: Vec<String>) -> Self {
        ExternalModel {
            program: program.into(),
            args,
            timeout: None,
        }
    }

    /// Whitespace-separated program and arguments; no shell quoting.
    pub fn from_command_line(cmd: &str) -> Result<Self> {
        let mut parts = cmd.split_whitespace().map(str::to_string);
        let program = parts
            .next()
            .ok_or_else(|| Error::Config("empty external model command".into()))?;
        Ok(ExternalModel::new(program, parts.collect()))
    }

    pub fn with_timeout(mut self, timeout: Option<Duration>) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn command_line(&self) -> String {
        std::iter::once(self.program.as_str())
            .chain(self.args.iter().map(String::as_str))
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// Run one batch. Failures never abort the campaign: they come back as
    /// per-row diagnostics.
    pub fn run_batch(&self, names: &[String], rows: &[(usize, Vec<f64>)], seed: u64) -> BatchOutputs {
        let fail_all = |msg: String| rows.iter().map(|(id, _)| (*id, Err(msg.clone()))).collect();
        let dir = match tempfile::Builder::new().prefix("sensikit-batch-").tempdir() {
            Ok(d) => d,
            Err(e) => return fail_all(format!("cannot create batch directory: {e}")),
        };
        let input = dir.path().join("input.csv");
        let output = dir.path().join("output.csv");
        if let Err(e) = write_input(&input, names, rows) {
            return fail_all(format!("cannot write batch input: {e}"));
        }
        if let Err(msg) = self.invoke(dir.path(), &input, &output, seed) {
            return fail_all(msg);
        }
        let text = match std::fs::read_to_string(&output) {
            Ok(t) => t,
            Err(e) => return fail_all(format!("model produced no readable output file: {e}")),
        };
        let mut parsed = match parse_output(&text) {
            Ok(p) => p,
            Err(e) => return fail_all(format!("malformed model output: {e}")),
        };
        rows.iter()
            .map(|(id, _)| {
                let out = parsed
                    .remove(id)
                    .unwrap_or_else(|| Err("missing output for run_id".to_string()));
                (*id, out)
            })
            .collect()
    }

    fn invoke(&self, dir: &Path, input: &Path, output: &Path, seed: u64) -> std::result::Result<(), String> {
        let stderr_path = dir.join("stderr.txt");
        let stderr = File::create(&stderr_path).map_err(|e| e.to_string())?;
        let mut child = Command::new(&self.program)
            .args(&self.args)
            .arg(input)
            .arg(output)
            .env(SEED_ENV, seed.to_string())
            .stdin(Stdio::null())
            .stdout(Stdio::null())
            .stderr(stderr)
            .spawn()
            .map_err(|e| format!("cannot start `{}`: {e}", self.program))?;

        let started = Instant::now();
        let status = loop {
            match child.try_wait().map_err(|e| e.to_string())? {
                Some(status) => break status,
                None => {
                    if self.timeout.is_some_and(|t| started.elapsed() >= t) {
                        let _ = child.kill();
                        let _ = child.wait();
                        return Err(format!(
                            "timed out after {:.1} s",
                            self.timeout.unwrap_or_default().as_secs_f64()
                        ));
                    }
                    std::thread::sleep(Duration::from_millis(5));
                }
            }
        };
        if !status.success() {
            let tail = std::fs::read_to_string(&stderr_path).unwrap_or_default();
            let tail: String = tail.lines().rev().take(5).collect::<Vec<_>>().into_iter().rev().collect::<Vec<_>>().join(" | ");
            return Err(format!("model exited with {status}: {tail}"));
        }
        Ok(())
    }
}

pub fn write_input(path: &Path, names: &[String], rows: &[(usize, Vec<f64>)]) -> Result<()> {
    let mut w = std::io::BufWriter::new(File::create(path)?);
    write!(w, "run_id")?;
    for n in names {
        write!(w, ",{n}")?;
    }
    writeln!(w)?;
    for (id, x) in rows {
        write!(w, "{id}")?;
        for v in x {
            write!(w, ",{v:?}")?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

/// Parse an input batch file back into factor names and rows.
pub fn read_input(text: &str) -> Result<(Vec<String>, Vec<(usize, Vec<f64>)>)> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| Error::Schema("empty batch input".into()))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols[0] != "run_id" {
        return Err(Error::Schema("batch input must start with run_id".into()));
    }
    let names = cols[1..].iter().map(|s| s.to_string()).collect::<Vec<_>>();
    let mut rows = Vec::new();
    for line in lines {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != cols.len() {
            return Err(Error::Schema(format!("row `{line}` has {} fields", fields.len())));
        }
        let id = fields[0]
            .parse()
            .map_err(|_| Error::Schema(format!("bad run_id `{}`", fields[0])))?;
        let x = fields[1..]
            .iter()
            .map(|f| f.parse::<f64>().map_err(|_| Error::Schema(format!("bad value `{f}`"))))
            .collect::<Result<Vec<_>>>()?;
        rows.push((id, x));
    }
    Ok((names, rows))
}

/// Parse either output protocol.
pub fn parse_output(text: &str) -> Result<BatchOutputs> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if header.first().map(String::as_str) != Some("run_id") || header.len() < 2 {
        return Err(Error::Schema("output header must be run_id,<columns...>".into()));
    }
    let long = header[1] == "time";
    let value_cols = if long { &header[2..] } else { &header[1..] };
    if value_cols.is_empty() {
        return Err(Error::Schema("output has no value columns".into()));
    }

    let mut scalars: BTreeMap<usize, BTreeMap<String, f64>> = BTreeMap::new();
    let mut series: BTreeMap<usize, (Vec<f64>, Vec<Vec<f64>>)> = BTreeMap::new();
    for rec in reader.records() {
        let rec = rec?;
        if rec.len() != header.len() {
            return Err(Error::Schema(format!("record {:?} has {} fields", rec.as_slice(), rec.len())));
        }
        let id: usize = rec[0]
            .parse()
            .map_err(|_| Error::Schema(format!("bad run_id `{}`", &rec[0])))?;
        let num = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| Error::Schema(format!("bad value `{s}` for run {id}")))
        };
        if long {
            let entry = series
                .entry(id)
                .or_insert_with(|| (Vec::new(), vec![Vec::new(); value_cols.len()]));
            entry.0.push(num(&rec[1])?);
            for (c, col) in entry.1.iter_mut().enumerate() {
                col.push(num(&rec[2 + c])?);
            }
        } else {
            let values = value_cols
                .iter()
                .enumerate()
                .map(|(c, name)| Ok((name.clone(), num(&rec[1 + c])?)))
                .collect::<Result<BTreeMap<_, _>>>()?;
            if scalars.insert(id, values).is_some() {
                return Err(Error::Schema(format!("duplicate run_id {id}")));
            }
        }
    }

    if !long {
        return Ok(scalars
            .into_iter()
            .map(|(id, m)| (id, Ok(ModelOutput::Scalars(m))))
            .collect());
    }
    Ok(series
        .into_iter()
        .map(|(id, (times, cols))| {
            let out = value_cols
                .iter()
                .zip(cols)
                .map(|(name, values)| TimeSeries::new(name.clone(), times.clone(), values))
                .collect::<Result<Vec<_>>>()
                .map(ModelOutput::Series)
                .map_err(|e| e.to_string());
            (id, out)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn script(dir: &Path, body: &str) -> String {
        let path = dir.join("model.sh");
        std::fs::write(&path, format!("#!/bin/sh\n{body}\n")).unwrap();
        path.display().to_string()
    }

    fn model(dir: &Path, body: &str) -> ExternalModel {
        ExternalModel::new("sh", vec![script(dir, body)])
    }

    fn rows() -> Vec<(usize, Vec<f64>)> {
        vec![(0, vec![1.0, 2.0]), (1, vec![0.5, -0.25]), (2, vec![3.0, 4.0])]
    }

    fn names() -> Vec<String> {
        vec!["a".into(), "b".into()]
    }

    #[test]
    fn sum_protocol_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = model(
            dir.path(),
            r#"awk -F, 'NR==1 {print "run_id,y"; next} {s=0; for(i=2;i<=NF;i++) s+=$i; print $1 "," s}' "$1" > "$2""#,
        );
        let out = m.run_batch(&names(), &rows(), 1);
        assert_eq!(out[&0], Ok(ModelOutput::scalar("y", 3.0)));
        assert_eq!(out[&1], Ok(ModelOutput::scalar("y", 0.25)));
        assert_eq!(out[&2], Ok(ModelOutput::scalar("y", 7.0)));
    }

    #[test]
    fn missing_run_and_nan() {
        let dir = tempfile::tempdir().unwrap();
        let m = model(dir.path(), r#"printf 'run_id,y\n0,NaN\n2,1.5\n' > "$2""#);
        let out = m.run_batch(&names(), &rows(), 1);
        match &out[&0] {
            Ok(ModelOutput::Scalars(s)) => assert!(s["y"].is_nan()),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(out[&1], Err("missing output for run_id".into()));
        assert_eq!(out[&2], Ok(ModelOutput::scalar("y", 1.5)));
    }

    #[test]
    fn nonzero_exit_fails_batch() {
        let dir = tempfile::tempdir().unwrap();
        let m = model(dir.path(), "echo broken >&2; exit 3");
        let out = m.run_batch(&names(), &rows(), 1);
        for r in out.values() {
            let msg = r.as_ref().unwrap_err();
            assert!(msg.contains("broken"), "{msg}");
        }
    }

    #[test]
    fn timeout_fails_batch() {
        let dir = tempfile::tempdir().unwrap();
        let m = model(dir.path(), "sleep 5").with_timeout(Some(Duration::from_millis(100)));
        let t = Instant::now();
        let out = m.run_batch(&names(), &rows(), 1);
        assert!(t.elapsed() < Duration::from_secs(3));
        assert!(out.values().all(|r| r.as_ref().unwrap_err().contains("timed out")));
    }

    #[test]
    fn seed_is_exported() {
        let dir = tempfile::tempdir().unwrap();
        let m = model(
            dir.path(),
            r#"{ echo run_id,seed; tail -n +2 "$1" | cut -d, -f1 | sed "s/$/,$SENSIKIT_BATCH_SEED/"; } > "$2""#,
        );
        let out = m.run_batch(&names(), &rows(), 42);
        assert_eq!(out[&2], Ok(ModelOutput::scalar("seed", 42.0)));
    }

    #[test]
    fn long_format_series() {
        let text = "run_id,time,p,q\n0,2011,1,0\n0,2012,2,0\n1,2011,3,1\n1,2012,4,1\n";
        let out = parse_output(text).unwrap();
        match &out[&1] {
            Ok(ModelOutput::Series(s)) => {
                assert_eq!(s.len(), 2);
                assert_eq!(s[0].name, "p");
                assert_eq!(s[0].values, vec![3.0, 4.0]);
                assert_eq!(s[1].times, vec![2011.0, 2012.0]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn input_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("in.csv");
        let rows = vec![(7, vec![0.1 + 0.2, 1e-300]), (9, vec![-2.5e17, 0.0])];
        write_input(&path, &names(), &rows).unwrap();
        let (n, back) = read_input(&std::fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(n, names());
        assert_eq!(back, rows);
    }
}
