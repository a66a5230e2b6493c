//! Elementary effects from Morris designs and factor screening.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::design::Design;
use crate::error::{Error, Result};
use crate::evaluation::EvaluationSet;
use crate::factors::FactorSet;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElementaryEffect {
    pub factor_index: usize,
    pub trajectory_index: usize,
    pub value: f64,
}

/// An effect that could not be computed because one of its two runs failed
/// or produced a non-finite value.
#[derive(Debug, Clone, PartialEq)]
pub struct PoisonedEffect {
    pub run_id: usize,
    pub factor_index: usize,
    pub trajectory_index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EffectScale {
    /// Output change per unit-hypercube step.
    #[default]
    Unit,
    /// Output change per physical unit of the factor.
    Physical,
}

#[derive(Debug, Clone)]
pub struct EffectSet {
    pub metric: String,
    pub factors: FactorSet,
    pub effects: Vec<ElementaryEffect>,
    pub poisoned: Vec<PoisonedEffect>,
}

impl EffectSet {
    /// Fails on the first poisoned effect instead of dropping it.
    pub fn strict(self) -> Result<Self> {
        match self.poisoned.first() {
            Some(p) => Err(Error::PoisonedEffect {
                run_id: p.run_id,
                factor: self.factors.get(p.factor_index).name.clone(),
                trajectory: p.trajectory_index,
            }),
            None => Ok(self),
        }
    }

    pub fn for_factor(&self, i: usize) -> impl Iterator<Item = &ElementaryEffect> {
        self.effects.iter().filter(move |e| e.factor_index == i)
    }
}

/// One elementary effect per factor per trajectory, taken as the forward
/// difference quotient in the `+delta` direction regardless of which way the
/// trajectory stepped.
pub fn compute_elementary_effects(
    design: &Design,
    evals: &EvaluationSet,
    metric: &str,
    scale: EffectScale,
) -> Result<EffectSet> {
    let morris = design
        .as_morris()
        .ok_or_else(|| Error::Config("elementary effects need a Morris design".into()))?;
    evals.check_alignment(design)?;
    evals.require_metric(metric)?;

    let value = |row: usize| evals.value(row, metric).filter(|v| v.is_finite());
    let mut effects = Vec::with_capacity(morris.r * morris.factors.k());
    let mut poisoned = Vec::new();
    for t in 0..morris.r {
        let rows = morris.trajectory_rows(t);
        for cur in rows.start + 1..rows.end {
            let prev = cur - 1;
            let i = morris.perturbed[cur].ok_or_else(|| {
                Error::Alignment(format!("design row {cur} is missing its perturbed factor"))
            })?;
            match (value(prev), value(cur)) {
                (Some(y0), Some(y1)) => {
                    let step = morris.points[cur][i] - morris.points[prev][i];
                    let mut ee = if step > 0.0 {
                        (y1 - y0) / morris.delta
                    } else {
                        (y0 - y1) / morris.delta
                    };
                    if scale == EffectScale::Physical {
                        ee /= morris.factors.get(i).width();
                    }
                    effects.push(ElementaryEffect {
                        factor_index: i,
                        trajectory_index: t,
                        value: ee,
                    });
                }
                (a, _) => poisoned.push(PoisonedEffect {
                    run_id: if a.is_none() { prev } else { cur },
                    factor_index: i,
                    trajectory_index: t,
                }),
            }
        }
    }
    Ok(EffectSet {
        metric: metric.to_string(),
        factors: morris.factors.clone(),
        effects,
        poisoned,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorMeasures {
    pub factor: String,
    pub metric: String,
    pub mu: f64,
    pub mu_star: f64,
    pub sigma2: f64,
    /// Square root of `sigma2`.
    pub se: f64,
    /// `sqrt(sigma2 / r)`, the conventional standard error of the mean.
    pub se_of_mean: f64,
    pub r: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EEMeasures {
    pub metric: String,
    pub factors: Vec<FactorMeasures>,
    pub warnings: Vec<String>,
}

impl EEMeasures {
    pub fn get(&self, factor: &str) -> Option<&FactorMeasures> {
        self.factors.iter().find(|m| m.factor == factor)
    }
}

/// Sum in a fixed value order so the result does not depend on trajectory order.
fn ordered_sum(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    values.iter().sum()
}

/// Mean, mean absolute value, and variance (divisor `r - 1`, deviations
/// from the mean) of each factor's elementary effects.
pub fn aggregate_ee_measures(effects: &EffectSet) -> Result<EEMeasures> {
    let mut warnings = Vec::new();
    if !effects.poisoned.is_empty() {
        warnings.push(format!(
            "{} elementary effect(s) dropped because of failed or non-finite runs (first: run {})",
            effects.poisoned.len(),
            effects.poisoned[0].run_id
        ));
    }
    let mut factors = Vec::with_capacity(effects.factors.k());
    for (i, spec) in effects.factors.factors().iter().enumerate() {
        let mut values: Vec<f64> = effects.for_factor(i).map(|e| e.value).collect();
        let r = values.len();
        if r < 2 {
            return Err(Error::InsufficientReplication {
                factor: spec.name.clone(),
                r,
            });
        }
        if effects.poisoned.iter().any(|p| p.factor_index == i) {
            warnings.push(format!("factor `{}` aggregated over reduced r = {r}", spec.name));
        }
        let rf = r as f64;
        let mu = ordered_sum(&mut values) / rf;
        let mut abs: Vec<f64> = values.iter().map(|v| v.abs()).collect();
        let mu_star = ordered_sum(&mut abs) / rf;
        let mut sq: Vec<f64> = values.iter().map(|v| (v - mu).powi(2)).collect();
        let sigma2 = ordered_sum(&mut sq) / (rf - 1.0);
        factors.push(FactorMeasures {
            factor: spec.name.clone(),
            metric: effects.metric.clone(),
            mu,
            mu_star,
            sigma2,
            se: sigma2.sqrt(),
            se_of_mean: (sigma2 / rf).sqrt(),
            r,
        });
    }
    Ok(EEMeasures {
        metric: effects.metric.clone(),
        factors,
        warnings,
    })
}

const EE_HEADER: [&str; 8] = [
    "factor",
    "metric",
    "mu",
    "mu_star",
    "sigma2",
    "se",
    "se_of_mean",
    "r",
];

/// Write the `factor,metric,mu,mu_star,sigma2,se,se_of_mean,r` report.
pub fn write_ee_report<W: Write>(measures: &[EEMeasures], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(EE_HEADER)?;
    for m in measures {
        for f in &m.factors {
            w.write_record([
                f.factor.clone(),
                f.metric.clone(),
                f.mu.to_string(),
                f.mu_star.to_string(),
                f.sigma2.to_string(),
                f.se.to_string(),
                f.se_of_mean.to_string(),
                f.r.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_ee_report(path: impl AsRef<Path>) -> Result<Vec<EEMeasures>> {
    let path = path.as_ref();
    let source = path.display().to_string();
    let mut reader = csv::Reader::from_path(path)?;
    if reader.headers()?.iter().ne(EE_HEADER) {
        return Err(Error::Parse {
            path: source,
            line: 1,
            message: format!("expected header {}", EE_HEADER.join(",")),
        });
    }
    let mut by_metric: BTreeMap<String, Vec<FactorMeasures>> = BTreeMap::new();
    let mut order = Vec::new();
    for (idx, rec) in reader.records().enumerate() {
        let rec = rec?;
        let bad = |message: String| Error::Parse {
            path: source.clone(),
            line: idx + 2,
            message,
        };
        let num = |i: usize| -> Result<f64> {
            rec[i]
                .parse()
                .map_err(|_| bad(format!("{}: `{}` is not a number", EE_HEADER[i], &rec[i])))
        };
        let m = FactorMeasures {
            factor: rec[0].to_string(),
            metric: rec[1].to_string(),
            mu: num(2)?,
            mu_star: num(3)?,
            sigma2: num(4)?,
            se: num(5)?,
            se_of_mean: num(6)?,
            r: rec[7].parse().map_err(|_| bad("r: not an integer".into()))?,
        };
        if !by_metric.contains_key(&m.metric) {
            order.push(m.metric.clone());
        }
        by_metric.entry(m.metric.clone()).or_default().push(m);
    }
    Ok(order
        .into_iter()
        .map(|metric| EEMeasures {
            factors: by_metric.remove(&metric).unwrap_or_default(),
            metric,
            warnings: Vec::new(),
        })
        .collect())
}

/// Threshold rule applied to the `se` column.
///
/// Override keys match either a factor's group tag or a metric name; where
/// several thresholds apply to the same (factor, metric) cell the lowest one
/// is used.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScreeningRule {
    pub se_threshold: Option<f64>,
    #[serde(default)]
    pub group_thresholds: BTreeMap<String, f64>,
    pub top_m: Option<usize>,
}

impl ScreeningRule {
    pub fn threshold(t: f64) -> Self {
        ScreeningRule {
            se_threshold: Some(t),
            ..Default::default()
        }
    }

    fn threshold_for(&self, group: Option<&str>, metric: &str) -> Option<f64> {
        let overrides = self
            .group_thresholds
            .iter()
            .filter(|(key, _)| Some(key.as_str()) == group || key.as_str() == metric)
            .map(|(_, &t)| t);
        self.se_threshold.into_iter().chain(overrides).reduce(f64::min)
    }

    fn has_thresholds(&self) -> bool {
        self.se_threshold.is_some() || !self.group_thresholds.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedFactor {
    pub factor: String,
    /// Largest `se` over all metrics; the ranking key.
    pub se: f64,
    pub mu_star: f64,
    /// Metrics in which this factor passed its threshold.
    pub metrics: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreeningResult {
    pub selected: Vec<SelectedFactor>,
    pub rule: ScreeningRule,
    /// Every factor ordered by its largest `mu_star` over metrics.
    pub mu_star_ranking: Vec<String>,
    pub warnings: Vec<String>,
}

impl ScreeningResult {
    pub fn names(&self) -> Vec<String> {
        self.selected.iter().map(|s| s.factor.clone()).collect()
    }
}

/// Select factors whose `se` exceeds the applicable threshold in any metric,
/// ordered by descending `se` (ties by name), truncated to `top_m`.
///
/// `factors` supplies group tags for group overrides; without it only
/// metric-name overrides can match.
pub fn screen_factors(
    measures: &[EEMeasures],
    factors: Option<&FactorSet>,
    rule: &ScreeningRule,
) -> Result<ScreeningResult> {
    if !rule.has_thresholds() && rule.top_m.is_none() {
        return Err(Error::Config(
            "screening rule needs a threshold or a top-m limit".into(),
        ));
    }
    let group_of = |name: &str| {
        factors
            .and_then(|fs| fs.index_of(name).map(|i| fs.get(i)))
            .and_then(|f| f.group.as_deref())
    };

    struct Summary {
        se: f64,
        mu_star: f64,
        passed: BTreeSet<String>,
    }
    let mut summary: BTreeMap<&str, Summary> = BTreeMap::new();
    for m in measures {
        for f in &m.factors {
            let entry = summary.entry(f.factor.as_str()).or_insert(Summary {
                se: f64::NEG_INFINITY,
                mu_star: f64::NEG_INFINITY,
                passed: BTreeSet::new(),
            });
            entry.se = entry.se.max(f.se);
            entry.mu_star = entry.mu_star.max(f.mu_star);
            let passes = if rule.has_thresholds() {
                rule.threshold_for(group_of(&f.factor), &m.metric)
                    .is_some_and(|t| f.se > t)
            } else {
                true
            };
            if passes {
                entry.passed.insert(m.metric.clone());
            }
        }
    }

    let mut selected: Vec<SelectedFactor> = summary
        .iter()
        .filter(|(_, s)| !s.passed.is_empty())
        .map(|(name, s)| SelectedFactor {
            factor: name.to_string(),
            se: s.se,
            mu_star: s.mu_star,
            metrics: s.passed.iter().cloned().collect(),
        })
        .collect();
    selected.sort_by(|a, b| b.se.total_cmp(&a.se).then_with(|| a.factor.cmp(&b.factor)));
    if let Some(m) = rule.top_m {
        selected.truncate(m);
    }

    let mut ranking: Vec<(&str, f64)> = summary.iter().map(|(n, s)| (*n, s.mu_star)).collect();
    ranking.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));

    let mut warnings = Vec::new();
    if selected.is_empty() {
        warnings.push("no factor passed the screening rule".into());
    }
    Ok(ScreeningResult {
        selected,
        rule: rule.clone(),
        mu_star_ranking: ranking.into_iter().map(|(n, _)| n.to_string()).collect(),
        warnings,
    })
}
