//! Tabular report bundles and plot-ready data files.
//!
//! A bundle is a set of named text files. Every table starts with a
//! `# design_hash=<hex>` line naming the design it was computed from, and
//! nothing in a bundle depends on time or environment, so rebuilding from
//! the same inputs gives identical bytes.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::effects::{EEMeasures, ScreeningResult};
use crate::error::{Error, Result};
use crate::evaluation::{EvaluationSet, RunStatus};
use crate::indices::{IndexEntry, IndicesDocument, SobolIndices};
use crate::pipeline::PipelineReport;

pub const DEFAULT_INTERACTION_GAP: f64 = 0.1;
pub const DEFAULT_BIN_WIDTH: f64 = 1.0;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const PLOT_STUB_FILE: &str = "plots.txt";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReportOptions {
    /// `S_Ti - S_i` above this flags a factor as interactive.
    pub interaction_gap: f64,
    pub bin_width: f64,
}

impl Default for ReportOptions {
    fn default() -> Self {
        ReportOptions {
            interaction_gap: DEFAULT_INTERACTION_GAP,
            bin_width: DEFAULT_BIN_WIDTH,
        }
    }
}

/// Equal-width bins `[w*j, w*(j+1))` covering the values, as
/// `(lower edge, count)`. Empty interior bins are kept.
pub fn histogram(values: &[f64], width: f64) -> Result<Vec<(f64, usize)>> {
    if !(width > 0.0 && width.is_finite()) {
        return Err(Error::Config(format!("bin width must be positive, got {width}")));
    }
    let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    let (Some(lo), Some(hi)) = (
        finite.iter().copied().reduce(f64::min),
        finite.iter().copied().reduce(f64::max),
    ) else {
        return Ok(Vec::new());
    };
    let first = (lo / width).floor() as i64;
    let last = (hi / width).floor() as i64;
    let mut counts = vec![0usize; (last - first + 1) as usize];
    for v in finite {
        counts[((v / width).floor() as i64 - first) as usize] += 1;
    }
    Ok(counts
        .into_iter()
        .enumerate()
        .map(|(j, c)| ((first + j as i64) as f64 * width, c))
        .collect())
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn file_safe(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

#[derive(Debug, Serialize)]
struct ManifestEntry {
    file: String,
    sha256: String,
    design_hash: String,
    description: String,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    tool: &'a str,
    version: &'a str,
    seeds: &'a BTreeMap<String, u64>,
    files: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReportBundle {
    pub files: BTreeMap<String, String>,
}

impl ReportBundle {
    pub fn write_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        for (name, text) in &self.files {
            std::fs::write(dir.join(name), text)?;
        }
        Ok(())
    }
}

#[derive(Debug, Default)]
pub struct ReportBuilder {
    opts: ReportOptions,
    files: BTreeMap<String, (String, String, String)>,
    seeds: BTreeMap<String, u64>,
    plots: Vec<String>,
}

impl ReportBuilder {
    pub fn new(opts: ReportOptions) -> Self {
        ReportBuilder {
            opts,
            ..Default::default()
        }
    }

    fn add(&mut self, name: String, hash: &str, description: &str, body: String) {
        let text = format!("# design_hash={hash}\n{body}");
        self.files.insert(name, (text, hash.to_string(), description.to_string()));
    }

    /// Elementary-effect tables, one per metric, sorted by `mu_star`.
    pub fn effects(&mut self, prefix: &str, design_hash: &str, measures: &[EEMeasures]) -> &mut Self {
        for m in measures {
            let mut rows = m.factors.clone();
            rows.sort_by(|a, b| b.mu_star.total_cmp(&a.mu_star).then_with(|| a.factor.cmp(&b.factor)));
            let mut body = String::from("factor,mu,mu_star,sigma2,se,se_of_mean,r\n");
            for f in rows {
                let _ = writeln!(
                    body,
                    "{},{},{},{},{},{},{}",
                    f.factor, f.mu, f.mu_star, f.sigma2, f.se, f.se_of_mean, f.r
                );
            }
            let name = format!("{prefix}ee_{}.csv", file_safe(&m.metric));
            self.plots.push(format!(
                "{name}: bar or scatter of mu_star (x) against se (y), labelled by factor"
            ));
            self.add(name, design_hash, &format!("elementary effects for {}", m.metric), body);
        }
        self
    }

    pub fn screening(&mut self, prefix: &str, design_hash: &str, result: &ScreeningResult) -> &mut Self {
        let mut body = String::from("rank,factor,se,mu_star,metrics\n");
        for (i, s) in result.selected.iter().enumerate() {
            let _ = writeln!(body, "{},{},{},{},{}", i + 1, s.factor, s.se, s.mu_star, s.metrics.join(";"));
        }
        self.add(format!("{prefix}screening.csv"), design_hash, "screening selection", body);
        self
    }

    /// Sorted index table, interaction table and second-order table per metric.
    pub fn indices(&mut self, prefix: &str, doc: &IndicesDocument) -> &mut Self {
        self.seeds.insert(format!("{prefix}bootstrap"), doc.seed);
        for m in &doc.metrics {
            let stem = format!("{prefix}{}", file_safe(&m.metric));
            self.index_table(&stem, &doc.design_hash, m);
            self.interaction_table(&stem, &doc.design_hash, m);
            if !m.second_order.is_empty() {
                let mut rows: Vec<&IndexEntry> = m.second_order.iter().collect();
                rows.sort_by(|a, b| by_estimate(a, b));
                let mut body = String::from("factor_i,factor_j,estimate,ci_low,ci_high,excludes_zero\n");
                for e in rows {
                    let _ = writeln!(
                        body,
                        "{},{},{},{},{},{}",
                        e.factors[0],
                        e.factors[1],
                        opt(e.estimate),
                        opt(e.ci_low),
                        opt(e.ci_high),
                        yes_no(e)
                    );
                }
                self.add(
                    format!("{stem}_second_order.csv"),
                    &doc.design_hash,
                    &format!("second-order indices for {}", m.metric),
                    body,
                );
            }
        }
        self
    }

    fn index_table(&mut self, stem: &str, hash: &str, m: &SobolIndices) {
        let mut order: Vec<usize> = (0..m.total.len()).collect();
        order.sort_by(|&a, &b| by_estimate(&m.total[a], &m.total[b]));
        let mut body = String::from(
            "factor,first_order,first_low,first_high,total,total_low,total_high,excludes_zero\n",
        );
        for i in order {
            let (s, t) = (&m.first_order[i], &m.total[i]);
            let excl = if s.positive() || t.positive() { "yes" } else { "no" };
            let _ = writeln!(
                body,
                "{},{},{},{},{},{},{},{excl}",
                s.factors[0],
                opt(s.estimate),
                opt(s.ci_low),
                opt(s.ci_high),
                opt(t.estimate),
                opt(t.ci_low),
                opt(t.ci_high)
            );
        }
        let name = format!("{stem}_indices.csv");
        self.plots.push(format!(
            "{name}: factor (x) against first_order and total (y), shading first_low..first_high and total_low..total_high"
        ));
        self.add(name, hash, &format!("first-order and total indices for {}", m.metric), body);
    }

    fn interaction_table(&mut self, stem: &str, hash: &str, m: &SobolIndices) {
        let mut body = String::from("factor,first_order,total,gap,interaction\n");
        let mut rows: Vec<(String, Option<f64>, Option<f64>, Option<f64>)> = m
            .first_order
            .iter()
            .zip(&m.total)
            .map(|(s, t)| {
                let gap = s.estimate.zip(t.estimate).map(|(s, t)| t - s);
                (s.factors[0].clone(), s.estimate, t.estimate, gap)
            })
            .collect();
        rows.sort_by(|a, b| {
            b.3.unwrap_or(f64::NEG_INFINITY)
                .total_cmp(&a.3.unwrap_or(f64::NEG_INFINITY))
                .then_with(|| a.0.cmp(&b.0))
        });
        for (f, s, t, gap) in rows {
            let flag = match gap {
                Some(g) if g > self.opts.interaction_gap => "interactive",
                Some(_) => "additive",
                None => "undefined",
            };
            let _ = writeln!(body, "{f},{},{},{},{flag}", opt(s), opt(t), opt(gap));
        }
        self.add(
            format!("{stem}_interactions.csv"),
            hash,
            &format!("total minus first-order gap for {}", m.metric),
            body,
        );
    }

    /// Frequency histograms of every metric over the `ok` rows.
    pub fn histograms(&mut self, prefix: &str, evals: &EvaluationSet) -> Result<&mut Self> {
        for metric in evals.metric_names() {
            let values: Vec<f64> = evals
                .rows
                .values()
                .filter(|r| r.status == RunStatus::Ok)
                .filter_map(|r| r.metrics.get(&metric).copied())
                .collect();
            let mut body = String::from("bin_low,bin_high,count\n");
            for (lo, c) in histogram(&values, self.opts.bin_width)? {
                let _ = writeln!(body, "{lo},{},{c}", lo + self.opts.bin_width);
            }
            let name = format!("{prefix}hist_{}.csv", file_safe(&metric));
            self.plots.push(format!("{name}: bar chart of count over [bin_low, bin_high)"));
            self.add(name, &evals.design_hash, &format!("histogram of {metric}"), body);
        }
        Ok(self)
    }

    pub fn pipeline(&mut self, report: &PipelineReport) -> &mut Self {
        self.seeds.insert("stage1_morris".into(), report.morris_seed);
        self.effects("stage1_", &report.screening_run.design_hash, &report.effects);
        self.screening("stage2_", &report.screening_run.design_hash, &report.selection);
        self.indices("stage3_", &report.first_total);
        let mut body = String::from("factor,survives\n");
        for f in &report.candidates {
            let _ = writeln!(body, "{f},{}", if report.survivors.contains(f) { "yes" } else { "no" });
        }
        self.add(
            "stage4_survivors.csv".into(),
            &report.first_total_run.design_hash,
            "candidates with a first-order or total interval above zero",
            body,
        );
        if let Some(doc) = &report.second_order {
            self.indices("stage5_", doc);
        }
        self
    }

    pub fn finish(self) -> Result<ReportBundle> {
        if self.files.is_empty() {
            return Err(Error::Config("report has no inputs".into()));
        }
        let mut files = BTreeMap::new();
        let mut entries = Vec::new();
        for (name, (text, hash, description)) in self.files {
            entries.push(ManifestEntry {
                file: name.clone(),
                sha256: hex::encode(Sha256::digest(text.as_bytes())),
                design_hash: hash,
                description,
            });
            files.insert(name, text);
        }
        let manifest = Manifest {
            tool: "sensikit",
            version: env!("CARGO_PKG_VERSION"),
            seeds: &self.seeds,
            files: entries,
        };
        files.insert(MANIFEST_FILE.into(), serde_json::to_string_pretty(&manifest)? + "\n");
        let mut stub = String::from(
            "# Plot stub: each line names a data file and the display it supports.\n\
             # Files are comma-separated with one leading comment line.\n",
        );
        for p in self.plots {
            stub.push_str(&p);
            stub.push('\n');
        }
        files.insert(PLOT_STUB_FILE.into(), stub);
        Ok(ReportBundle { files })
    }
}

fn yes_no(e: &IndexEntry) -> &'static str {
    match e.excludes_zero {
        crate::indices::YesNo::Yes => "yes",
        crate::indices::YesNo::No => "no",
    }
}

/// Descending estimate, undefined last, ties by factor names.
fn by_estimate(a: &IndexEntry, b: &IndexEntry) -> std::cmp::Ordering {
    let key = |e: &IndexEntry| e.estimate.unwrap_or(f64::NEG_INFINITY);
    key(b).total_cmp(&key(a)).then_with(|| a.factors.cmp(&b.factors))
}
