//! Evaluation of designs against models, with batching, parallelism and
//! resumable result stores.

pub mod external;
pub mod metrics;
pub mod models;
pub mod store;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Duration;

use rayon::prelude::*;

use crate::design::Design;
use crate::error::{Error, Result};
use crate::evaluation::{EvaluationSet, RunRecord, RunStatus};

use self::metrics::{reduce_timeseries, MetricSpec};
use self::models::{ModelOutput, ModelRef};
use self::store::ResultStore;

pub const DEFAULT_BATCH_SIZE: usize = 256;

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub jobs: usize,
    pub batch_size: usize,
    /// Per-batch wall-clock limit for external models.
    pub timeout: Option<Duration>,
    pub store: Option<PathBuf>,
    /// Base seed exported to external models; each batch gets
    /// `seed + first run id`.
    pub seed: u64,
    /// Stop after evaluating this many new rows; the rest stay pending.
    pub max_new_rows: Option<usize>,
    /// Inputs passed to the model in addition to the design factors.
    pub fixed: Vec<(String, f64)>,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            jobs: 1,
            batch_size: DEFAULT_BATCH_SIZE,
            timeout: None,
            store: None,
            seed: 0,
            max_new_rows: None,
            fixed: Vec::new(),
        }
    }
}

/// Turn one model output into a run record. Metric specs are applied to
/// series outputs; scalar outputs are used as they are.
fn to_record(run_id: usize, output: ModelOutput, specs: &[MetricSpec]) -> Result<RunRecord> {
    let metrics = match output {
        ModelOutput::Scalars(m) => m,
        ModelOutput::Series(series) => {
            if specs.is_empty() {
                return Err(Error::Config(
                    "model returns time series; at least one metric spec is required".into(),
                ));
            }
            let mut out = BTreeMap::new();
            for spec in specs {
                let Some(s) = series.iter().find(|s| s.name == spec.series) else {
                    return Ok(RunRecord::failed(
                        run_id,
                        format!("model output has no series `{}`", spec.series),
                    ));
                };
                out.insert(spec.name.clone(), reduce_timeseries(s, spec)?);
            }
            out
        }
    };
    if let Some((name, v)) = metrics.iter().find(|(_, v)| !v.is_finite()) {
        return Ok(RunRecord::failed(run_id, format!("non-finite value {v} for metric `{name}`")));
    }
    Ok(RunRecord::ok(run_id, metrics))
}

fn run_batch(
    model: &ModelRef,
    names: &[String],
    rows: &[(usize, Vec<f64>)],
    specs: &[MetricSpec],
    opts: &RunOptions,
) -> Result<Vec<RunRecord>> {
    match model {
        ModelRef::Builtin(m) => rows
            .iter()
            .map(|(id, x)| match m.evaluate(names, x) {
                Ok(out) => to_record(*id, out, specs),
                Err(e) => Ok(RunRecord::failed(*id, e.to_string())),
            })
            .collect(),
        ModelRef::External(ext) => {
            let seed = opts.seed.wrapping_add(rows[0].0 as u64);
            let ext = ext.clone().with_timeout(opts.timeout.or(ext.timeout));
            ext.run_batch(names, rows, seed)
                .into_iter()
                .map(|(id, out)| match out {
                    Ok(out) => to_record(id, out, specs),
                    Err(msg) => Ok(RunRecord::failed(id, msg)),
                })
                .collect()
        }
    }
}

/// Evaluate every row of `design` that does not already have an `ok` record
/// in the store. Failed rows are recorded, never fatal.
pub fn evaluate_design(
    design: &Design,
    model: &ModelRef,
    specs: &[MetricSpec],
    opts: &RunOptions,
) -> Result<EvaluationSet> {
    let factors = design.factors();
    let mut names = factors.names();
    for (name, _) in &opts.fixed {
        if names.contains(name) {
            return Err(Error::Config(format!("fixed input `{name}` is also a design factor")));
        }
        names.push(name.clone());
    }
    if let ModelRef::Builtin(m) = model {
        m.check_dimension(&names)?;
    }
    if opts.batch_size == 0 || opts.jobs == 0 {
        return Err(Error::Config("jobs and batch size must be positive".into()));
    }

    let hash = design.content_hash();
    let rows = design.rows();
    let store = match &opts.store {
        Some(dir) => Some(ResultStore::open(dir, &hash, rows)?),
        None => None,
    };
    let done: BTreeMap<usize, RunRecord> = store
        .as_ref()
        .map(|s| {
            s.records()
                .iter()
                .filter(|(_, r)| r.status == RunStatus::Ok)
                .map(|(id, r)| (*id, r.clone()))
                .collect()
        })
        .unwrap_or_default();

    let mut pending: Vec<usize> = (0..rows).filter(|id| !done.contains_key(id)).collect();
    if let Some(cap) = opts.max_new_rows {
        pending.truncate(cap);
    }
    log::info!(
        "{} of {rows} rows already complete, evaluating {}",
        done.len(),
        pending.len()
    );

    let inputs = pending
        .iter()
        .map(|&id| {
            let mut x = factors.map_to_physical(&design.points()[id])?;
            x.extend(opts.fixed.iter().map(|(_, v)| *v));
            Ok((id, x))
        })
        .collect::<Result<Vec<_>>>()?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.jobs)
        .build()
        .map_err(|e| Error::Config(format!("cannot build worker pool: {e}")))?;
    let fresh: Vec<Vec<RunRecord>> = pool.install(|| {
        inputs
            .par_chunks(opts.batch_size)
            .map(|batch| {
                let records = run_batch(model, &names, batch, specs, opts)?;
                if let Some(s) = &store {
                    s.append(&records)?;
                }
                Ok(records)
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let mut evals = EvaluationSet::new(hash);
    for (_, r) in done {
        evals.insert(r);
    }
    for r in fresh.into_iter().flatten() {
        evals.insert(r);
    }
    for id in 0..rows {
        if !evals.rows.contains_key(&id) {
            evals.insert(RunRecord {
                run_id: id,
                status: RunStatus::Pending,
                metrics: BTreeMap::new(),
                diagnostic: None,
            });
        }
    }
    let failed = evals.count(RunStatus::Failed);
    if failed > 0 {
        log::warn!("{failed} of {rows} rows failed");
    }
    if let Some(s) = store {
        s.finish(&evals)?;
    }
    Ok(evals)
}
