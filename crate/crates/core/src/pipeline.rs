//! Staged screening-then-variance analysis.
//!
//! 1. Elementary effects over all factors.
//! 2. Over-sized screening selection.
//! 3. First-order and total indices only on the selection.
//! 4. Keep factors with a first-order or total interval above zero.
//! 5. Full second-order indices on the survivors.
//!
//! Factors outside a stage's design are held at their fixed value.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::design::{
    generate_morris_design, generate_saltelli_design, Design, MorrisConfig, SaltelliConfig,
};
use crate::effects::{
    aggregate_ee_measures, compute_elementary_effects, screen_factors, EEMeasures, EffectScale,
    ScreeningResult, ScreeningRule,
};
use crate::error::{Error, Result};
use crate::evaluation::{EvaluationSet, RunStatus};
use crate::factors::FactorSet;
use crate::indices::{bootstrap_indices, split_blocks, IndicesDocument};
use crate::runner::metrics::MetricSpec;
use crate::runner::models::ModelRef;
use crate::runner::{evaluate_design, RunOptions};

/// Elementary-effect measures for every metric in `evals`.
pub fn analyze_effects(design: &Design, evals: &EvaluationSet, scale: EffectScale) -> Result<Vec<EEMeasures>> {
    evals.check_alignment(design)?;
    evals
        .metric_names()
        .iter()
        .map(|m| aggregate_ee_measures(&compute_elementary_effects(design, evals, m, scale)?))
        .collect()
}

/// Bootstrapped Sobol indices for every metric in `evals`.
pub fn analyze_indices(design: &Design, evals: &EvaluationSet, reps: usize, seed: u64) -> Result<IndicesDocument> {
    let saltelli = design
        .as_saltelli()
        .ok_or_else(|| Error::Config("Sobol indices need a Saltelli design".into()))?;
    let metrics = evals
        .metric_names()
        .iter()
        .map(|m| bootstrap_indices(&split_blocks(design, evals, m)?, reps, seed))
        .collect::<Result<Vec<_>>>()?;
    Ok(IndicesDocument {
        design_hash: design.content_hash(),
        n: saltelli.n,
        reps,
        seed,
        metrics,
    })
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub morris: MorrisConfig,
    pub scale: EffectScale,
    /// Stage-2 rule; should select more factors than the final target.
    pub screening: ScreeningRule,
    /// Factors always carried into stage 3 regardless of screening.
    pub controls: Vec<String>,
    pub n: usize,
    pub skip: u64,
    pub bootstrap_reps: usize,
    pub bootstrap_seed: u64,
    pub metrics: Vec<MetricSpec>,
    pub run: RunOptions,
    /// Parent of the per-stage result stores.
    pub store_root: Option<PathBuf>,
}

impl PipelineConfig {
    pub fn new(morris: MorrisConfig, screening: ScreeningRule, n: usize) -> Self {
        PipelineConfig {
            morris,
            scale: EffectScale::Unit,
            screening,
            controls: Vec::new(),
            n,
            skip: crate::design::DEFAULT_SKIP,
            bootstrap_reps: crate::indices::DEFAULT_BOOTSTRAP_REPS,
            bootstrap_seed: 0,
            metrics: Vec::new(),
            run: RunOptions::default(),
            store_root: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRun {
    pub design_hash: String,
    pub rows: usize,
    pub failed_rows: usize,
    pub factors: Vec<String>,
    pub fixed: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub model: String,
    pub factors: Vec<String>,
    pub morris_seed: u64,
    pub screening_run: StageRun,
    pub effects: Vec<EEMeasures>,
    pub selection: ScreeningResult,
    pub candidates: Vec<String>,
    pub first_total_run: StageRun,
    pub first_total: IndicesDocument,
    pub survivors: Vec<String>,
    pub second_order_run: Option<StageRun>,
    pub second_order: Option<IndicesDocument>,
    pub notes: Vec<String>,
}

impl PipelineReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn read_path(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

struct Stage<'a> {
    model: &'a ModelRef,
    all: &'a FactorSet,
    cfg: &'a PipelineConfig,
}

impl Stage<'_> {
    fn run(&self, name: &str, design: &Design) -> Result<(EvaluationSet, StageRun)> {
        let active = design.factors().names();
        let fixed: Vec<(String, f64)> = self
            .all
            .factors()
            .iter()
            .filter(|f| !active.contains(&f.name))
            .map(|f| (f.name.clone(), f.fixed_value()))
            .collect();
        let opts = RunOptions {
            fixed: fixed.clone(),
            store: self.cfg.store_root.as_ref().map(|r| r.join(name)),
            ..self.cfg.run.clone()
        };
        let evals = evaluate_design(design, self.model, &self.cfg.metrics, &opts)?;
        let run = StageRun {
            design_hash: design.content_hash(),
            rows: design.rows(),
            failed_rows: evals.count(RunStatus::Failed),
            factors: active,
            fixed,
        };
        Ok((evals, run))
    }
}

pub fn staged_analysis(factors: &FactorSet, model: &ModelRef, cfg: &PipelineConfig) -> Result<PipelineReport> {
    let stage = Stage { model, all: factors, cfg };
    let mut notes = Vec::new();

    let morris: Design = generate_morris_design(factors, cfg.morris)?.into();
    let (ee_evals, screening_run) = stage.run("screening", &morris)?;
    let effects = analyze_effects(&morris, &ee_evals, cfg.scale)?;

    let selection = screen_factors(&effects, Some(factors), &cfg.screening)?;
    let mut chosen = selection.names();
    for c in &cfg.controls {
        if factors.index_of(c).is_none() {
            return Err(Error::Config(format!("control factor `{c}` is not in the factor set")));
        }
        if !chosen.contains(c) {
            chosen.push(c.clone());
        }
    }
    if chosen.is_empty() {
        return Err(Error::EmptySelection(
            "screening selected no factors; lower the threshold or raise --top".into(),
        ));
    }
    let candidate_set = factors.subset(&chosen)?;
    let candidates = candidate_set.names();

    let ft_cfg = SaltelliConfig {
        run_budget: cfg.morris.run_budget,
        ..SaltelliConfig::new(cfg.n).first_and_total_only().with_skip(cfg.skip)
    };
    let ft_design: Design = generate_saltelli_design(&candidate_set, ft_cfg)?.into();
    let (ft_evals, first_total_run) = stage.run("first_total", &ft_design)?;
    let first_total = analyze_indices(&ft_design, &ft_evals, cfg.bootstrap_reps, cfg.bootstrap_seed)?;

    let survivors: Vec<String> = candidates
        .iter()
        .filter(|f| {
            first_total.metrics.iter().any(|m| {
                m.first(f).is_some_and(|e| e.positive()) || m.total_of(f).is_some_and(|e| e.positive())
            })
        })
        .cloned()
        .collect();

    let (second_order_run, second_order) = if survivors.len() >= 2 {
        let survivor_set = factors.subset(&survivors)?;
        let so_cfg = SaltelliConfig {
            run_budget: cfg.morris.run_budget,
            ..SaltelliConfig::new(cfg.n).with_skip(cfg.skip)
        };
        let so_design: Design = generate_saltelli_design(&survivor_set, so_cfg)?.into();
        let (so_evals, run) = stage.run("second_order", &so_design)?;
        let doc = analyze_indices(&so_design, &so_evals, cfg.bootstrap_reps, cfg.bootstrap_seed)?;
        (Some(run), Some(doc))
    } else {
        notes.push(format!(
            "{} survivor(s); second-order stage needs at least two factors and was skipped",
            survivors.len()
        ));
        (None, None)
    };

    Ok(PipelineReport {
        model: model.to_string(),
        factors: factors.names(),
        morris_seed: cfg.morris.seed,
        screening_run,
        effects,
        selection,
        candidates,
        first_total_run,
        first_total,
        survivors,
        second_order_run,
        second_order,
        notes,
    })
}
