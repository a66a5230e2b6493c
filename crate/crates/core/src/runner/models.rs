//! Model references: built-in analytic functions, the demo model, and
//! external executables.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::demo::{simulate_demo, DemoParams};
use crate::error::{Error, Result};
use crate::runner::external::ExternalModel;
use crate::runner::metrics::TimeSeries;

#[derive(Debug, Clone, PartialEq)]
pub enum ModelOutput {
    Scalars(BTreeMap<String, f64>),
    Series(Vec<TimeSeries>),
}

impl ModelOutput {
    pub fn scalar(name: &str, value: f64) -> Self {
        ModelOutput::Scalars(BTreeMap::from([(name.to_string(), value)]))
    }
}

/// Built-in deterministic models over physical inputs. Scalar models emit a
/// single metric named `y`.
#[derive(Debug, Clone, PartialEq)]
pub enum BuiltinModel {
    /// `sin x1 + a sin^2 x2 + b x3^4 sin x1`, inputs usually on `[-pi, pi]`.
    Ishigami { a: f64, b: f64 },
    /// `prod (|4 x_i - 2| + a_i) / (1 + a_i)`, inputs on `[0, 1]`.
    GFunction { a: Vec<f64> },
    /// `c . x`
    Linear { c: Vec<f64> },
    /// `prod x_i`
    PureProduct,
    /// The demo industry model; emits the `production` time series.
    Demo,
}

pub const SCALAR_METRIC: &str = "y";

impl BuiltinModel {
    pub fn ishigami() -> Self {
        BuiltinModel::Ishigami { a: 7.0, b: 0.1 }
    }

    pub fn check_dimension(&self, names: &[String]) -> Result<()> {
        let k = names.len();
        let want = match self {
            BuiltinModel::Ishigami { .. } => Some(3),
            BuiltinModel::GFunction { a } => Some(a.len()),
            BuiltinModel::Linear { c } => Some(c.len()),
            BuiltinModel::PureProduct => None,
            BuiltinModel::Demo => {
                if let Some(bad) = names.iter().find(|n| !DemoParams::accepts(n)) {
                    return Err(Error::Config(format!("demo model has no parameter `{bad}`")));
                }
                None
            }
        };
        match want {
            Some(w) if w != k => Err(Error::Config(format!(
                "model {self} expects {w} inputs, design provides {k}"
            ))),
            _ if k == 0 => Err(Error::Config("model needs at least one input".into())),
            _ => Ok(()),
        }
    }

    pub fn evaluate(&self, names: &[String], x: &[f64]) -> Result<ModelOutput> {
        let y = match self {
            BuiltinModel::Ishigami { a, b } => {
                x[0].sin() + a * x[1].sin().powi(2) + b * x[2].powi(4) * x[0].sin()
            }
            BuiltinModel::GFunction { a } => x
                .iter()
                .zip(a)
                .map(|(xi, ai)| ((4.0 * xi - 2.0).abs() + ai) / (1.0 + ai))
                .product(),
            BuiltinModel::Linear { c } => c.iter().zip(x).map(|(c, x)| c * x).sum(),
            BuiltinModel::PureProduct => x.iter().product(),
            BuiltinModel::Demo => {
                let params = DemoParams::from_named(names, x)?;
                return Ok(ModelOutput::Series(vec![simulate_demo(&params)?]));
            }
        };
        Ok(ModelOutput::scalar(SCALAR_METRIC, y))
    }
}

fn join(v: &[f64]) -> String {
    v.iter().map(f64::to_string).collect::<Vec<_>>().join(",")
}

impl fmt::Display for BuiltinModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BuiltinModel::Ishigami { a, b } => write!(f, "builtin:ishigami:{a},{b}"),
            BuiltinModel::GFunction { a } => write!(f, "builtin:gfunction:{}", join(a)),
            BuiltinModel::Linear { c } => write!(f, "builtin:linear:{}", join(c)),
            BuiltinModel::PureProduct => f.write_str("builtin:pure_product"),
            BuiltinModel::Demo => f.write_str("builtin:demo"),
        }
    }
}

/// Catalog shown by `models list`.
pub const BUILTIN_CATALOG: [(&str, &str); 5] = [
    ("builtin:ishigami[:a,b]", "Ishigami function, default a=7 b=0.1; three inputs on [-pi, pi]"),
    ("builtin:gfunction:a1,...,ak", "Sobol g-function with one coefficient per input on [0, 1]"),
    ("builtin:linear:c1,...,ck", "linear model c . x"),
    ("builtin:pure_product", "product of all inputs"),
    ("builtin:demo", "demo industry-growth model; emits the `production` time series"),
];

#[derive(Debug, Clone, PartialEq)]
pub enum ModelRef {
    Builtin(BuiltinModel),
    External(ExternalModel),
}

impl From<BuiltinModel> for ModelRef {
    fn from(m: BuiltinModel) -> Self {
        ModelRef::Builtin(m)
    }
}

impl From<ExternalModel> for ModelRef {
    fn from(m: ExternalModel) -> Self {
        ModelRef::External(m)
    }
}

impl fmt::Display for ModelRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelRef::Builtin(b) => b.fmt(f),
            ModelRef::External(e) => write!(f, "exec:{}", e.command_line()),
        }
    }
}

fn parse_numbers(s: &str, what: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("{what}: `{t}` is not a number")))
        })
        .collect()
}

impl FromStr for ModelRef {
    type Err = Error;

    /// `builtin:<name>[:params]` or `exec:<program> [args...]`.
    fn from_str(s: &str) -> Result<Self> {
        if let Some(cmd) = s.strip_prefix("exec:") {
            return Ok(ModelRef::External(ExternalModel::from_command_line(cmd)?));
        }
        let rest = s
            .strip_prefix("builtin:")
            .ok_or_else(|| Error::Config(format!("model reference `{s}` must start with builtin: or exec:")))?;
        let (name, params) = match rest.split_once(':') {
            Some((n, p)) => (n, Some(p)),
            None => (rest, None),
        };
        let model = match (name, params) {
            ("ishigami", None) => BuiltinModel::ishigami(),
            ("ishigami", Some(p)) => match parse_numbers(p, "ishigami")?.as_slice() {
                [a, b] => BuiltinModel::Ishigami { a: *a, b: *b },
                _ => return Err(Error::Config("ishigami takes two parameters a,b".into())),
            },
            ("gfunction", Some(p)) => BuiltinModel::GFunction {
                a: parse_numbers(p, "gfunction")?,
            },
            ("linear", Some(p)) => BuiltinModel::Linear {
                c: parse_numbers(p, "linear")?,
            },
            ("pure_product", None) => BuiltinModel::PureProduct,
            ("demo", None) => BuiltinModel::Demo,
            ("gfunction" | "linear", None) => {
                return Err(Error::Config(format!("builtin:{name} needs a coefficient list")))
            }
            _ => return Err(Error::Config(format!("unknown model reference `{s}`"))),
        };
        Ok(ModelRef::Builtin(model))
    }
}
