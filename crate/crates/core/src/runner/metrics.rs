//! Reduction of model time series to scalar metrics.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub name: String,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl TimeSeries {
    pub fn new(name: impl Into<String>, times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let name = name.into();
        if times.is_empty() || times.len() != values.len() {
            return Err(Error::Schema(format!(
                "series `{name}` needs equal, non-zero numbers of times and values"
            )));
        }
        if times.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Schema(format!(
                "series `{name}` times must be strictly increasing"
            )));
        }
        Ok(TimeSeries {
            name,
            times,
            values,
        })
    }

    /// Piecewise-linear value at `t`, held flat outside the sampled range.
    pub fn interpolate(&self, t: f64) -> f64 {
        let last = self.times.len() - 1;
        if t <= self.times[0] {
            return self.values[0];
        }
        if t >= self.times[last] {
            return self.values[last];
        }
        let hi = self.times.partition_point(|&x| x <= t);
        let lo = hi - 1;
        let w = (t - self.times[lo]) / (self.times[hi] - self.times[lo]);
        self.values[lo] + w * (self.values[hi] - self.values[lo])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    /// Maximum over samples with `time < cutoff`.
    MaxBefore,
    /// Linear interpolation at the cutoff.
    ValueAt,
    /// Time-weighted mean from the first sample up to the cutoff.
    MeanOver,
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MetricKind::MaxBefore => "max_before",
            MetricKind::ValueAt => "value_at",
            MetricKind::MeanOver => "mean_over",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSpec {
    pub name: String,
    pub kind: MetricKind,
    pub series: String,
    pub cutoff: f64,
}

impl MetricSpec {
    pub fn max_before(name: impl Into<String>, series: impl Into<String>, cutoff: f64) -> Self {
        MetricSpec {
            name: name.into(),
            kind: MetricKind::MaxBefore,
            series: series.into(),
            cutoff,
        }
    }
}

impl FromStr for MetricSpec {
    type Err = Error;

    /// `name=kind:series:cutoff`, e.g. `peak_2035=max_before:production:2035`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("metric spec `{s}` is not name=kind:series:cutoff"));
        let (name, rest) = s.split_once('=').ok_or_else(bad)?;
        let parts: Vec<&str> = rest.split(':').collect();
        if name.is_empty() || parts.len() != 3 {
            return Err(bad());
        }
        let kind = match parts[0] {
            "max_before" => MetricKind::MaxBefore,
            "value_at" => MetricKind::ValueAt,
            "mean_over" => MetricKind::MeanOver,
            _ => return Err(bad()),
        };
        Ok(MetricSpec {
            name: name.to_string(),
            kind,
            series: parts[1].to_string(),
            cutoff: parts[2].parse().map_err(|_| bad())?,
        })
    }
}

impl fmt::Display for MetricSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}={}:{}:{}", self.name, self.kind, self.series, self.cutoff)
    }
}

pub fn reduce_timeseries(series: &TimeSeries, spec: &MetricSpec) -> Result<f64> {
    let cutoff = spec.cutoff;
    match spec.kind {
        MetricKind::MaxBefore => series
            .times
            .iter()
            .zip(&series.values)
            .filter(|(t, _)| **t < cutoff)
            .map(|(_, v)| *v)
            .reduce(f64::max)
            .ok_or_else(|| {
                Error::UndefinedMetric(format!(
                    "{}: no samples of `{}` before {cutoff}",
                    spec.name, series.name
                ))
            }),
        MetricKind::ValueAt => Ok(series.interpolate(cutoff)),
        MetricKind::MeanOver => {
            let t0 = series.times[0];
            let end = cutoff.min(*series.times.last().expect("non-empty"));
            if end <= t0 {
                return Ok(series.values[0]);
            }
            let mut area = 0.0;
            let mut prev = (t0, series.values[0]);
            for (&t, &v) in series.times.iter().zip(&series.values).skip(1) {
                let (t, v) = if t > end { (end, series.interpolate(end)) } else { (t, v) };
                area += 0.5 * (prev.1 + v) * (t - prev.0);
                prev = (t, v);
                if t >= end {
                    break;
                }
            }
            Ok(area / (end - t0))
        }
    }
}
