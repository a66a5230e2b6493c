//! First-order, second-order and total-effect Sobol indices from Saltelli
//! designs, with joint-row bootstrap confidence intervals.
//!
//! Estimator forms, with `f0` and `V` the mean and sample variance of the
//! pooled `A` and `B` outputs:
//!
//! * first order: `V_i = mean_j (yB_j - f0) (yAB(i)_j - yA_j)`
//! * total (Jansen): `VT_i = mean_j (yA_j - yAB(i)_j)^2 / 2`
//! * closed second order: `Vc_ij = mean_l (yBA(i)_l - f0) (yAB(j)_l - f0)`,
//!   and `S_ij = Vc_ij / V - S_i - S_j`
//!
//! Centering on `f0` makes every index invariant under affine rescaling of
//! the output.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::{Block, Design};
use crate::error::{Error, Result};
use crate::evaluation::EvaluationSet;

/// Variances at or below this are treated as zero and indices are undefined.
pub const MIN_VARIANCE: f64 = 1e-300;
pub const DEFAULT_BOOTSTRAP_REPS: usize = 1000;

/// Saltelli outputs partitioned by block, row `j` of every vector belonging
/// to the same base sample.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockOutputs {
    pub metric: String,
    pub factor_names: Vec<String>,
    pub y_a: Vec<f64>,
    pub y_b: Vec<f64>,
    pub y_ab: Vec<Vec<f64>>,
    /// Present only when the design carries the `BA` blocks.
    pub y_ba: Option<Vec<Vec<f64>>>,
    /// Base-sample rows dropped because some block produced a failed or
    /// non-finite output.
    pub dropped_rows: Vec<usize>,
}

impl BlockOutputs {
    pub fn n(&self) -> usize {
        self.y_a.len()
    }

    pub fn k(&self) -> usize {
        self.y_ab.len()
    }

    /// Build from block vectors directly (all of length `n`).
    pub fn from_vectors(
        metric: impl Into<String>,
        factor_names: Vec<String>,
        y_a: Vec<f64>,
        y_b: Vec<f64>,
        y_ab: Vec<Vec<f64>>,
        y_ba: Option<Vec<Vec<f64>>>,
    ) -> Result<Self> {
        let n = y_a.len();
        let ok = y_b.len() == n
            && y_ab.len() == factor_names.len()
            && y_ab.iter().all(|v| v.len() == n)
            && y_ba
                .as_ref()
                .is_none_or(|ba| ba.len() == factor_names.len() && ba.iter().all(|v| v.len() == n));
        if !ok {
            return Err(Error::Alignment("block vectors have inconsistent lengths".into()));
        }
        Ok(BlockOutputs {
            metric: metric.into(),
            factor_names,
            y_a,
            y_b,
            y_ab,
            y_ba,
            dropped_rows: Vec::new(),
        })
    }

    /// Apply `f` to every output value.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> BlockOutputs {
        let m = |v: &Vec<f64>| v.iter().map(|&x| f(x)).collect::<Vec<_>>();
        BlockOutputs {
            metric: self.metric.clone(),
            factor_names: self.factor_names.clone(),
            y_a: m(&self.y_a),
            y_b: m(&self.y_b),
            y_ab: self.y_ab.iter().map(m).collect(),
            y_ba: self.y_ba.as_ref().map(|ba| ba.iter().map(m).collect()),
            dropped_rows: self.dropped_rows.clone(),
        }
    }
}

/// Partition a Saltelli evaluation set into blocks. Rows are looked up by
/// run id, so the evaluation order does not matter.
pub fn split_blocks(design: &Design, evals: &EvaluationSet, metric: &str) -> Result<BlockOutputs> {
    let saltelli = design
        .as_saltelli()
        .ok_or_else(|| Error::Config("Sobol indices need a Saltelli design".into()))?;
    evals.check_alignment(design)?;
    evals.require_metric(metric)?;

    let k = saltelli.factors.k();
    let n = saltelli.n;
    let value = |block: Block, j: usize| {
        evals
            .value(saltelli.row_of(block, j), metric)
            .filter(|v| v.is_finite())
    };

    let mut out = BlockOutputs {
        metric: metric.to_string(),
        factor_names: saltelli.factors.names(),
        y_a: Vec::with_capacity(n),
        y_b: Vec::with_capacity(n),
        y_ab: vec![Vec::with_capacity(n); k],
        y_ba: saltelli.second_order.then(|| vec![Vec::with_capacity(n); k]),
        dropped_rows: Vec::new(),
    };
    'rows: for j in 0..n {
        let mut row = Vec::with_capacity(2 * k + 2);
        let mut blocks = vec![Block::A, Block::B];
        blocks.extend((0..k).map(Block::AB));
        if saltelli.second_order {
            blocks.extend((0..k).map(Block::BA));
        }
        for b in blocks {
            match value(b, j) {
                Some(v) => row.push(v),
                None => {
                    out.dropped_rows.push(j);
                    continue 'rows;
                }
            }
        }
        out.y_a.push(row[0]);
        out.y_b.push(row[1]);
        for i in 0..k {
            out.y_ab[i].push(row[2 + i]);
        }
        if let Some(ba) = out.y_ba.as_mut() {
            for i in 0..k {
                ba[i].push(row[2 + k + i]);
            }
        }
    }
    Ok(out)
}

/// Point estimates over a (possibly resampled) set of base rows.
#[derive(Debug, Clone, PartialEq)]
struct Estimates {
    mean: f64,
    variance: f64,
    first: Vec<f64>,
    total: Vec<f64>,
    /// Pairs `(i, j)` with `i < j`, in lexicographic order.
    second: Vec<f64>,
}

fn pairs(k: usize) -> Vec<(usize, usize)> {
    (0..k)
        .flat_map(|i| (i + 1..k).map(move |j| (i, j)))
        .collect()
}

/// Mean and sample variance of `yA ∪ yB` over `rows`.
fn pooled_moments(b: &BlockOutputs, rows: &[usize]) -> (f64, f64) {
    let count = 2.0 * rows.len() as f64;
    // Shifted by the first value so that constant outputs give exactly zero.
    let shift = b.y_a[rows[0]];
    let offset = rows
        .iter()
        .map(|&j| (b.y_a[j] - shift) + (b.y_b[j] - shift))
        .sum::<f64>()
        / count;
    let ss = rows
        .iter()
        .map(|&j| (b.y_a[j] - shift - offset).powi(2) + (b.y_b[j] - shift - offset).powi(2))
        .sum::<f64>();
    (shift + offset, ss / (count - 1.0))
}

fn first_order_on(b: &BlockOutputs, rows: &[usize], mean: f64, var: f64) -> Vec<f64> {
    let n = rows.len() as f64;
    b.y_ab
        .iter()
        .map(|ab| {
            rows.iter()
                .map(|&j| (b.y_b[j] - mean) * (ab[j] - b.y_a[j]))
                .sum::<f64>()
                / n
                / var
        })
        .collect()
}

fn total_on(b: &BlockOutputs, rows: &[usize], var: f64) -> Vec<f64> {
    let n = rows.len() as f64;
    b.y_ab
        .iter()
        .map(|ab| {
            rows.iter().map(|&j| (b.y_a[j] - ab[j]).powi(2)).sum::<f64>() / (2.0 * n) / var
        })
        .collect()
}

fn second_order_on(
    b: &BlockOutputs,
    ba: &[Vec<f64>],
    rows: &[usize],
    mean: f64,
    var: f64,
    first: &[f64],
) -> Vec<f64> {
    let n = rows.len() as f64;
    pairs(b.k())
        .into_iter()
        .map(|(i, j)| {
            let closed = rows
                .iter()
                .map(|&l| (ba[i][l] - mean) * (b.y_ab[j][l] - mean))
                .sum::<f64>()
                / n;
            closed / var - first[i] - first[j]
        })
        .collect()
}

fn estimate_on(b: &BlockOutputs, rows: &[usize]) -> Option<Estimates> {
    let (mean, variance) = pooled_moments(b, rows);
    if !(variance > MIN_VARIANCE) {
        return None;
    }
    let first = first_order_on(b, rows, mean, variance);
    let total = total_on(b, rows, variance);
    let second = b
        .y_ba
        .as_ref()
        .map(|ba| second_order_on(b, ba, rows, mean, variance, &first))
        .unwrap_or_default();
    Some(Estimates {
        mean,
        variance,
        first,
        total,
        second,
    })
}

fn check_n(b: &BlockOutputs) -> Result<Vec<usize>> {
    if b.n() < 2 {
        return Err(Error::Config(format!(
            "index estimation needs at least 2 usable base rows, have {}",
            b.n()
        )));
    }
    Ok((0..b.n()).collect())
}

/// First-order indices `S_i`; `None` when the output variance is zero.
pub fn estimate_first_order(blocks: &BlockOutputs) -> Result<Option<Vec<f64>>> {
    let rows = check_n(blocks)?;
    let (mean, var) = pooled_moments(blocks, &rows);
    Ok((var > MIN_VARIANCE).then(|| first_order_on(blocks, &rows, mean, var)))
}

/// Total-effect indices `S_Ti`; `None` when the output variance is zero.
pub fn estimate_total_effects(blocks: &BlockOutputs) -> Result<Option<Vec<f64>>> {
    let rows = check_n(blocks)?;
    let (_, var) = pooled_moments(blocks, &rows);
    Ok((var > MIN_VARIANCE).then(|| total_on(blocks, &rows, var)))
}

/// Second-order indices `S_ij` for `i < j` in lexicographic pair order.
pub fn estimate_second_order(blocks: &BlockOutputs) -> Result<Option<Vec<((usize, usize), f64)>>> {
    let ba = blocks.y_ba.as_ref().ok_or_else(|| {
        Error::Capability("second-order indices need a design with BA blocks".into())
    })?;
    if blocks.k() < 2 {
        return Err(Error::Config("second-order indices need k >= 2".into()));
    }
    let rows = check_n(blocks)?;
    let (mean, var) = pooled_moments(blocks, &rows);
    if !(var > MIN_VARIANCE) {
        return Ok(None);
    }
    let first = first_order_on(blocks, &rows, mean, var);
    Ok(Some(
        pairs(blocks.k())
            .into_iter()
            .zip(second_order_on(blocks, ba, &rows, mean, var, &first))
            .collect(),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum YesNo {
    Yes,
    No,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub factors: Vec<String>,
    /// `None` when the output variance is zero.
    pub estimate: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    /// Standard deviation of the bootstrap replicates.
    pub boot_se: Option<f64>,
    pub excludes_zero: YesNo,
}

impl IndexEntry {
    /// Whether the whole confidence interval is above zero.
    pub fn positive(&self) -> bool {
        self.ci_low.is_some_and(|lo| lo > 0.0)
    }

    fn undefined(factors: Vec<String>) -> Self {
        IndexEntry {
            factors,
            estimate: None,
            ci_low: None,
            ci_high: None,
            boot_se: None,
            excludes_zero: YesNo::No,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SobolIndices {
    pub metric: String,
    pub mean: Option<f64>,
    pub variance: f64,
    /// Set when `V(Y)` is zero; every estimate is then `None`.
    pub undefined: bool,
    pub n: usize,
    pub dropped_rows: usize,
    pub bootstrap_reps: usize,
    pub skipped_resamples: usize,
    pub seed: u64,
    pub first_order: Vec<IndexEntry>,
    pub total: Vec<IndexEntry>,
    pub second_order: Vec<IndexEntry>,
}

impl SobolIndices {
    pub fn first(&self, factor: &str) -> Option<&IndexEntry> {
        self.first_order.iter().find(|e| e.factors[0] == factor)
    }

    pub fn total_of(&self, factor: &str) -> Option<&IndexEntry> {
        self.total.iter().find(|e| e.factors[0] == factor)
    }

    pub fn second(&self, a: &str, b: &str) -> Option<&IndexEntry> {
        self.second_order.iter().find(|e| {
            (e.factors[0] == a && e.factors[1] == b) || (e.factors[0] == b && e.factors[1] == a)
        })
    }
}

/// Linearly interpolated quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn resample_rng(seed: u64, rep: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep as u64);
    rng
}

/// Point estimates plus 95% percentile bootstrap intervals.
///
/// Each replicate draws one vector of base-row indices with replacement and
/// applies it to every block, so `A`/`B`/hybrid rows stay paired. Replicate
/// `r` uses its own ChaCha stream derived from `(seed, r)`; replicates run in
/// parallel with results identical to a serial run.
pub fn bootstrap_indices(blocks: &BlockOutputs, reps: usize, seed: u64) -> Result<SobolIndices> {
    if reps == 0 {
        return Err(Error::Config("bootstrap needs at least one replicate".into()));
    }
    let rows = check_n(blocks)?;
    let k = blocks.k();
    let names = &blocks.factor_names;
    let pair_names: Vec<Vec<String>> = pairs(k)
        .into_iter()
        .map(|(i, j)| vec![names[i].clone(), names[j].clone()])
        .collect();
    let has_second = blocks.y_ba.is_some() && k >= 2;

    let base = SobolIndices {
        metric: blocks.metric.clone(),
        mean: None,
        variance: 0.0,
        undefined: true,
        n: blocks.n(),
        dropped_rows: blocks.dropped_rows.len(),
        bootstrap_reps: reps,
        skipped_resamples: 0,
        seed,
        first_order: Vec::new(),
        total: Vec::new(),
        second_order: Vec::new(),
    };

    let Some(point) = estimate_on(blocks, &rows) else {
        let (mean, variance) = pooled_moments(blocks, &rows);
        return Ok(SobolIndices {
            mean: Some(mean),
            variance: variance.max(0.0),
            first_order: names.iter().map(|n| IndexEntry::undefined(vec![n.clone()])).collect(),
            total: names.iter().map(|n| IndexEntry::undefined(vec![n.clone()])).collect(),
            second_order: if has_second {
                pair_names.into_iter().map(IndexEntry::undefined).collect()
            } else {
                Vec::new()
            },
            ..base
        });
    };

    let n = blocks.n();
    let replicates: Vec<Option<Estimates>> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = resample_rng(seed, rep);
            let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            estimate_on(blocks, &idx)
        })
        .collect();
    let good: Vec<&Estimates> = replicates.iter().flatten().collect();
    let skipped = reps - good.len();

    let entry = |factors: Vec<String>, estimate: f64, samples: Vec<f64>| -> IndexEntry {
        if samples.is_empty() {
            return IndexEntry {
                factors,
                estimate: Some(estimate),
                ci_low: Some(estimate),
                ci_high: Some(estimate),
                boot_se: None,
                excludes_zero: if estimate != 0.0 { YesNo::Yes } else { YesNo::No },
            };
        }
        let mut sorted = samples;
        sorted.sort_by(f64::total_cmp);
        // The percentile interval is widened to contain the point estimate.
        let lo = quantile(&sorted, 0.025).min(estimate);
        let hi = quantile(&sorted, 0.975).max(estimate);
        let m = sorted.iter().sum::<f64>() / sorted.len() as f64;
        let sd = if sorted.len() > 1 {
            (sorted.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (sorted.len() - 1) as f64).sqrt()
        } else {
            0.0
        };
        IndexEntry {
            factors,
            estimate: Some(estimate),
            ci_low: Some(lo),
            ci_high: Some(hi),
            boot_se: Some(sd),
            excludes_zero: if lo > 0.0 || hi < 0.0 { YesNo::Yes } else { YesNo::No },
        }
    };
    let collect = |pick: &dyn Fn(&Estimates) -> f64| good.iter().map(|e| pick(e)).collect::<Vec<_>>();

    let first_order = (0..k)
        .map(|i| entry(vec![names[i].clone()], point.first[i], collect(&|e| e.first[i])))
        .collect();
    let total = (0..k)
        .map(|i| entry(vec![names[i].clone()], point.total[i], collect(&|e| e.total[i])))
        .collect();
    let second_order = if has_second {
        pair_names
            .into_iter()
            .enumerate()
            .map(|(p, names)| entry(names, point.second[p], collect(&|e| e.second[p])))
            .collect()
    } else {
        Vec::new()
    };

    Ok(SobolIndices {
        mean: Some(point.mean),
        variance: point.variance,
        undefined: false,
        skipped_resamples: skipped,
        first_order,
        total,
        second_order,
        ..base
    })
}

/// Indices for several metrics plus what is needed to reproduce them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndicesDocument {
    pub design_hash: String,
    pub n: usize,
    pub reps: usize,
    pub seed: u64,
    pub metrics: Vec<SobolIndices>,
}

impl IndicesDocument {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn read_path(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn metric(&self, name: &str) -> Option<&SobolIndices> {
        self.metrics.iter().find(|m| m.metric == name)
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Flat `kind,factor_i,factor_j,estimate,ci_low,ci_high` export of one metric.
pub fn write_flat_csv<W: std::io::Write>(indices: &SobolIndices, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["kind", "factor_i", "factor_j", "estimate", "ci_low", "ci_high"])?;
    let sections = [
        ("first_order", &indices.first_order),
        ("total", &indices.total),
        ("second_order", &indices.second_order),
    ];
    for (kind, entries) in sections {
        for e in entries {
            w.write_record([
                kind.to_string(),
                e.factors[0].clone(),
                e.factors.get(1).cloned().unwrap_or_default(),
                opt(e.estimate),
                opt(e.ci_low),
                opt(e.ci_high),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
