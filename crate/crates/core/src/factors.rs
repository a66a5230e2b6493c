//! Factor definitions and the mapping between the unit hypercube and
//! physical factor ranges.
//!
//! Every design in this crate lives in `[0, 1]^k`. Column `i` of a design
//! always refers to `FactorSet::factors()[i]`, and physical values are only
//! produced at evaluation time through [`FactorSet::map_to_physical`].

use std::collections::HashSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Rounding {
    #[default]
    Continuous,
    Integer,
}

impl FromStr for Rounding {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "" | "continuous" => Ok(Rounding::Continuous),
            "integer" | "int" => Ok(Rounding::Integer),
            other => Err(format!("unknown rounding `{other}` (expected continuous or integer)")),
        }
    }
}

impl fmt::Display for Rounding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rounding::Continuous => f.write_str("continuous"),
            Rounding::Integer => f.write_str("integer"),
        }
    }
}

/// A single ranged model input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorSpec {
    pub name: String,
    pub min: f64,
    pub max: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<String>,
    #[serde(default)]
    pub rounding: Rounding,
}

impl FactorSpec {
    pub fn new(name: impl Into<String>, min: f64, max: f64) -> Self {
        FactorSpec {
            name: name.into(),
            min,
            max,
            base: None,
            group: None,
            rounding: Rounding::Continuous,
        }
    }

    pub fn with_base(mut self, base: f64) -> Self {
        self.base = Some(base);
        self
    }

    pub fn with_group(mut self, group: impl Into<String>) -> Self {
        self.group = Some(group.into());
        self
    }

    pub fn with_rounding(mut self, rounding: Rounding) -> Self {
        self.rounding = rounding;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |message: String| Error::InvalidFactor {
            factor: self.name.clone(),
            message,
        };
        if self.name.is_empty() {
            return Err(invalid("empty name".into()));
        }
        if !self.min.is_finite() || !self.max.is_finite() {
            return Err(invalid("range bounds must be finite".into()));
        }
        if self.min >= self.max {
            return Err(invalid(format!(
                "min ({}) must be strictly less than max ({})",
                self.min, self.max
            )));
        }
        if let Some(base) = self.base {
            if !(self.min..=self.max).contains(&base) {
                return Err(invalid(format!(
                    "base {} lies outside [{}, {}]",
                    base, self.min, self.max
                )));
            }
        }
        Ok(())
    }

    pub fn width(&self) -> f64 {
        self.max - self.min
    }

    /// Value used when the factor is held constant: `base`, or the range
    /// midpoint when no base is given.
    pub fn fixed_value(&self) -> f64 {
        let v = self.base.unwrap_or(0.5 * (self.min + self.max));
        self.round(v)
    }

    fn round(&self, v: f64) -> f64 {
        match self.rounding {
            Rounding::Continuous => v,
            // f64::round rounds half away from zero.
            Rounding::Integer => v.round(),
        }
    }

    pub fn to_physical(&self, u: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&u) {
            return Err(Error::Domain(format!(
                "unit coordinate {u} for factor `{}` is outside [0, 1]",
                self.name
            )));
        }
        Ok(self.round(self.min + u * self.width()))
    }

    pub fn to_unit(&self, x: f64) -> f64 {
        (x - self.min) / self.width()
    }
}

/// Ordered, validated collection of factors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<FactorSpec>", into = "Vec<FactorSpec>")]
pub struct FactorSet {
    factors: Vec<FactorSpec>,
}

impl TryFrom<Vec<FactorSpec>> for FactorSet {
    type Error = Error;

    fn try_from(factors: Vec<FactorSpec>) -> Result<Self> {
        FactorSet::new(factors)
    }
}

impl From<FactorSet> for Vec<FactorSpec> {
    fn from(set: FactorSet) -> Self {
        set.factors
    }
}

impl FactorSet {
    pub fn new(factors: Vec<FactorSpec>) -> Result<Self> {
        let mut seen = HashSet::new();
        for f in &factors {
            f.validate()?;
            if !seen.insert(f.name.as_str()) {
                return Err(Error::InvalidFactor {
                    factor: f.name.clone(),
                    message: "duplicate factor name".into(),
                });
            }
        }
        Ok(FactorSet { factors })
    }

    /// Factors named `x1..xk`, each spanning `[min, max]`.
    pub fn uniform(k: usize, min: f64, max: f64) -> Result<Self> {
        FactorSet::new(
            (1..=k)
                .map(|i| FactorSpec::new(format!("x{i}"), min, max))
                .collect(),
        )
    }

    pub fn k(&self) -> usize {
        self.factors.len()
    }

    pub fn factors(&self) -> &[FactorSpec] {
        &self.factors
    }

    pub fn get(&self, i: usize) -> &FactorSpec {
        &self.factors[i]
    }

    pub fn names(&self) -> Vec<String> {
        self.factors.iter().map(|f| f.name.clone()).collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.factors.iter().position(|f| f.name == name)
    }

    /// Factors named in `names`, kept in this set's canonical order.
    pub fn subset<S: AsRef<str>>(&self, names: &[S]) -> Result<FactorSet> {
        for n in names {
            if self.index_of(n.as_ref()).is_none() {
                return Err(Error::Config(format!("unknown factor `{}`", n.as_ref())));
            }
        }
        let wanted: HashSet<&str> = names.iter().map(|n| n.as_ref()).collect();
        FactorSet::new(
            self.factors
                .iter()
                .filter(|f| wanted.contains(f.name.as_str()))
                .cloned()
                .collect(),
        )
    }

    pub fn map_to_physical(&self, unit_point: &[f64]) -> Result<Vec<f64>> {
        if unit_point.len() != self.k() {
            return Err(Error::Domain(format!(
                "point has {} coordinates, factor set has {}",
                unit_point.len(),
                self.k()
            )));
        }
        self.factors
            .iter()
            .zip(unit_point)
            .map(|(f, &u)| f.to_physical(u))
            .collect()
    }

    pub fn map_to_unit(&self, physical: &[f64]) -> Vec<f64> {
        self.factors
            .iter()
            .zip(physical)
            .map(|(f, &x)| f.to_unit(x))
            .collect()
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        parse_factor_config(&text, &path.display().to_string())
    }

    /// Render in the factor-config format accepted by [`parse_factor_config`].
    pub fn to_config_string(&self) -> String {
        let mut out = String::from("name,min,max,base,group,rounding\n");
        for f in &self.factors {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                f.name,
                f.min,
                f.max,
                f.base.map(|b| b.to_string()).unwrap_or_default(),
                f.group.as_deref().unwrap_or(""),
                f.rounding
            ));
        }
        out
    }
}

const CONFIG_COLUMNS: [&str; 6] = ["name", "min", "max", "base", "group", "rounding"];

/// Parse the comma-separated factor configuration format.
///
/// The header row is optional. `#` comment lines and blank lines are
/// skipped; `base`, `group` and `rounding` may be empty or absent.
pub fn parse_factor_config(text: &str, source: &str) -> Result<FactorSet> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: source.to_string(),
        line,
        message,
    };
    let mut factors = Vec::new();
    let mut header_seen = false;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim().trim_start_matches('\u{feff}');
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();

        if !header_seen && fields[0].eq_ignore_ascii_case("name") {
            header_seen = true;
            for (got, want) in fields.iter().zip(CONFIG_COLUMNS) {
                if !got.eq_ignore_ascii_case(want) {
                    return Err(parse_err(
                        line_no,
                        format!("unexpected header column `{got}`, expected `{want}`"),
                    ));
                }
            }
            if fields.len() > CONFIG_COLUMNS.len() {
                return Err(parse_err(line_no, "too many header columns".into()));
            }
            continue;
        }
        header_seen = true;

        if fields.len() < 3 {
            return Err(parse_err(
                line_no,
                format!("expected at least name,min,max; got {} field(s)", fields.len()),
            ));
        }
        if fields.len() > CONFIG_COLUMNS.len() {
            return Err(parse_err(
                line_no,
                format!("expected at most 6 fields; got {}", fields.len()),
            ));
        }
        let number = |col: usize, s: &str| -> Result<f64> {
            s.parse::<f64>().map_err(|_| {
                parse_err(
                    line_no,
                    format!("column `{}`: `{s}` is not a number", CONFIG_COLUMNS[col]),
                )
            })
        };
        let optional = |i: usize| fields.get(i).copied().filter(|s| !s.is_empty());

        let name = fields[0];
        if name.is_empty() {
            return Err(parse_err(line_no, "empty factor name".into()));
        }
        let mut spec = FactorSpec::new(name, number(1, fields[1])?, number(2, fields[2])?);
        if let Some(b) = optional(3) {
            spec.base = Some(number(3, b)?);
        }
        spec.group = optional(4).map(str::to_string);
        if let Some(r) = optional(5) {
            spec.rounding = r.parse().map_err(|m| parse_err(line_no, m))?;
        }
        factors.push(spec);
    }

    if factors.is_empty() {
        return Err(Error::Config(format!("{source}: no factors defined")));
    }
    FactorSet::new(factors)
}
