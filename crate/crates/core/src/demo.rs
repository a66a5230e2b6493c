//! Small industry-growth model used as a desk-scale stand-in for a large
//! system-dynamics simulator.
//!
//! Capacity is ordered in proportion to the investment margin, matures after
//! a construction delay, and is shut down while the operating margin is
//! negative. The market price collapses as production approaches a demand
//! ceiling, so aggressive incentives overshoot the ceiling and, once the
//! incentives lapse, production crashes back. The model is a qualitative
//! analog only; none of its parameters correspond to a calibrated quantity.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factors::{FactorSet, FactorSpec, Rounding};
use crate::runner::metrics::TimeSeries;

/// Production never exceeds `demand_ceiling * (1 + OVERSHOOT_TOLERANCE)`.
pub const OVERSHOOT_TOLERANCE: f64 = 0.25;
pub const DEFAULT_DT: f64 = 0.125;

/// Width in years of the smoothed subsidy on/off ramps.
const RAMP_YEARS: f64 = 1.0;
/// Seed capacity so investment can start from an empty industry.
const SEED_CAPACITY: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoParams {
    /// Per-unit price support while the subsidy window is open.
    pub price_subsidy: f64,
    /// Extra per-unit support while production is below `startup_volume`.
    pub startup_subsidy: f64,
    pub startup_volume: f64,
    pub subsidy_start: f64,
    pub subsidy_duration: f64,
    /// Fraction of the capital charge paid by a grant, in `[0, 1]`.
    pub capital_grant_fraction: f64,
    pub demand_ceiling: f64,
    pub investment_sensitivity: f64,
    pub construction_delay: f64,
    pub market_price: f64,
    pub production_cost: f64,
    pub capital_cost: f64,
    pub shutdown_rate: f64,
    pub initial_capacity: f64,
    pub horizon: (f64, f64),
    pub dt: f64,
}

impl Default for DemoParams {
    fn default() -> Self {
        DemoParams {
            price_subsidy: 0.0,
            startup_subsidy: 0.0,
            startup_volume: 1.0,
            subsidy_start: 2013.0,
            subsidy_duration: 0.0,
            capital_grant_fraction: 0.0,
            demand_ceiling: 15.0,
            investment_sensitivity: 0.5,
            construction_delay: 3.0,
            market_price: 2.5,
            production_cost: 2.0,
            capital_cost: 0.6,
            shutdown_rate: 0.5,
            initial_capacity: 0.5,
            horizon: (2011.0, 2050.0),
            dt: DEFAULT_DT,
        }
    }
}

/// Names accepted as factors, in the order of the bundled demo factor set.
pub const FACTOR_NAMES: [&str; 12] = [
    "price_subsidy",
    "startup_subsidy",
    "startup_volume",
    "subsidy_start",
    "subsidy_duration",
    "capital_grant_fraction",
    "demand_ceiling",
    "investment_sensitivity",
    "construction_delay",
    "market_price",
    "production_cost",
    "shutdown_rate",
];

impl DemoParams {
    fn field_mut(&mut self, name: &str) -> Option<&mut f64> {
        Some(match name {
            "price_subsidy" => &mut self.price_subsidy,
            "startup_subsidy" => &mut self.startup_subsidy,
            "startup_volume" => &mut self.startup_volume,
            "subsidy_start" => &mut self.subsidy_start,
            "subsidy_duration" => &mut self.subsidy_duration,
            "capital_grant_fraction" => &mut self.capital_grant_fraction,
            "demand_ceiling" => &mut self.demand_ceiling,
            "investment_sensitivity" => &mut self.investment_sensitivity,
            "construction_delay" => &mut self.construction_delay,
            "market_price" => &mut self.market_price,
            "production_cost" => &mut self.production_cost,
            "capital_cost" => &mut self.capital_cost,
            "shutdown_rate" => &mut self.shutdown_rate,
            "initial_capacity" => &mut self.initial_capacity,
            _ => return None,
        })
    }

    /// Defaults overridden by named values; unknown names are rejected.
    pub fn from_named(names: &[String], values: &[f64]) -> Result<Self> {
        let mut p = DemoParams::default();
        for (name, &v) in names.iter().zip(values) {
            *p.field_mut(name).ok_or_else(|| {
                Error::Config(format!("demo model has no parameter `{name}`"))
            })? = v;
        }
        p.validate()?;
        Ok(p)
    }

    pub fn accepts(name: &str) -> bool {
        DemoParams::default().field_mut(name).is_some()
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(format!("demo parameters: {m}")));
        if !(self.dt > 0.0) {
            return fail("dt must be positive");
        }
        if !(self.horizon.1 - self.horizon.0 >= 1.0) {
            return fail("horizon must span at least one year");
        }
        if !(self.demand_ceiling > 0.0) {
            return fail("demand_ceiling must be positive");
        }
        if !(self.construction_delay > 0.0) {
            return fail("construction_delay must be positive");
        }
        if !(0.0..=1.0).contains(&self.capital_grant_fraction) {
            return fail("capital_grant_fraction must lie in [0, 1]");
        }
        if self.startup_volume <= 0.0 || self.initial_capacity < 0.0 {
            return fail("startup_volume must be positive and initial_capacity non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DemoState {
    pub capacity_under_construction: f64,
    pub installed_capacity: f64,
    pub production: f64,
}

/// Twice-differentiable 0-to-1 ramp on `[0, 1]`.
fn smoothstep(u: f64) -> f64 {
    let u = u.clamp(0.0, 1.0);
    u * u * u * (u * (6.0 * u - 15.0) + 10.0)
}

/// Margin scale below which the positive-part ramp rounds off.
const MARGIN_SOFTNESS: f64 = 0.5;

/// Positive part with a rounded corner: exactly zero for `x <= 0`, twice
/// differentiable at zero, and close to `x` for `x >> MARGIN_SOFTNESS`.
/// A corner here would spoil the accuracy of the fixed-step integrator
/// whenever a margin changes sign.
fn soft_positive(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        x * x * x / (x * x + MARGIN_SOFTNESS * MARGIN_SOFTNESS)
    }
}

struct Rates {
    construction: f64,
    installed: f64,
}

impl DemoParams {
    fn production_of(&self, installed: f64) -> f64 {
        installed.min(self.demand_ceiling * (1.0 + OVERSHOOT_TOLERANCE))
    }

    fn subsidy_window(&self, t: f64) -> f64 {
        let on = smoothstep((t - self.subsidy_start) / RAMP_YEARS);
        let off = smoothstep((t - self.subsidy_start - self.subsidy_duration) / RAMP_YEARS);
        on - off
    }

    fn rates(&self, t: f64, under_construction: f64, installed: f64) -> Rates {
        let production = self.production_of(installed);
        let saturation = production / self.demand_ceiling;
        let price = self.market_price / (1.0 + saturation.powi(8));
        let early = 1.0
            - smoothstep((production - 0.5 * self.startup_volume) / self.startup_volume);
        let subsidy = self.subsidy_window(t) * (self.price_subsidy + self.startup_subsidy * early);
        let operating_margin = price + subsidy - self.production_cost;
        let investment_margin =
            operating_margin - self.capital_cost * (1.0 - self.capital_grant_fraction);

        // Orders saturate in the margin, which bounds the growth rate by
        // `investment_sensitivity`.
        let m = soft_positive(investment_margin);
        let investment = self.investment_sensitivity
            * (m / (1.0 + m))
            * (installed + under_construction + SEED_CAPACITY);
        let maturing = under_construction / self.construction_delay;
        let shutdown = self.shutdown_rate * soft_positive(-operating_margin) * installed;
        Rates {
            construction: investment - maturing,
            installed: maturing - shutdown,
        }
    }
}

/// Integrate with fixed-step RK4 and sample production once per year.
pub fn simulate_demo(params: &DemoParams) -> Result<TimeSeries> {
    Ok(simulate_states(params)?.0)
}

/// Yearly production series together with the yearly states.
pub fn simulate_states(params: &DemoParams) -> Result<(TimeSeries, Vec<DemoState>)> {
    params.validate()?;
    let (start, end) = params.horizon;
    let years = (end - start).floor() as usize;
    let steps_per_year = (1.0 / params.dt).round().max(1.0) as usize;
    let h = 1.0 / steps_per_year as f64;

    let mut u = 0.0;
    let mut c = params.initial_capacity;
    let mut times = Vec::with_capacity(years + 1);
    let mut states = Vec::with_capacity(years + 1);
    let record = |t: f64, u: f64, c: f64, times: &mut Vec<f64>, states: &mut Vec<DemoState>| {
        times.push(t);
        states.push(DemoState {
            capacity_under_construction: u,
            installed_capacity: c,
            production: params.production_of(c),
        });
    };
    record(start, u, c, &mut times, &mut states);

    for year in 0..years {
        for step in 0..steps_per_year {
            let t = start + year as f64 + step as f64 * h;
            let k1 = params.rates(t, u, c);
            let k2 = params.rates(t + h / 2.0, u + h / 2.0 * k1.construction, c + h / 2.0 * k1.installed);
            let k3 = params.rates(t + h / 2.0, u + h / 2.0 * k2.construction, c + h / 2.0 * k2.installed);
            let k4 = params.rates(t + h, u + h * k3.construction, c + h * k3.installed);
            u += h / 6.0 * (k1.construction + 2.0 * k2.construction + 2.0 * k3.construction + k4.construction);
            c += h / 6.0 * (k1.installed + 2.0 * k2.installed + 2.0 * k3.installed + k4.installed);
            if !u.is_finite() || !c.is_finite() {
                return Err(Error::Integration {
                    t: t + h,
                    message: "state became non-finite".into(),
                });
            }
            u = u.max(0.0);
            c = c.max(0.0);
        }
        record(start + (year + 1) as f64, u, c, &mut times, &mut states);
    }

    let values = states.iter().map(|s| s.production).collect();
    Ok((TimeSeries::new("production", times, values)?, states))
}

/// The bundled 12-factor demo configuration.
pub fn demo_factor_set() -> FactorSet {
    let f = |name: &str, min: f64, max: f64, base: f64| FactorSpec::new(name, min, max).with_base(base);
    FactorSet::new(vec![
        f("price_subsidy", 0.0, 3.0, 0.0).with_group("price"),
        f("startup_subsidy", 0.0, 3.0, 0.0).with_group("price"),
        f("startup_volume", 0.5, 5.0, 1.0).with_group("price"),
        f("subsidy_start", 2011.0, 2015.0, 2013.0)
            .with_group("timing")
            .with_rounding(Rounding::Integer),
        f("subsidy_duration", 0.0, 20.0, 0.0).with_group("timing"),
        f("capital_grant_fraction", 0.0, 1.0, 0.0).with_group("capital"),
        f("demand_ceiling", 10.0, 20.0, 15.0).with_group("market"),
        f("investment_sensitivity", 0.1, 1.0, 0.5).with_group("industry"),
        f("construction_delay", 1.0, 5.0, 3.0).with_group("industry"),
        f("market_price", 2.0, 3.0, 2.5).with_group("market"),
        f("production_cost", 1.5, 2.5, 2.0).with_group("industry"),
        f("shutdown_rate", 0.1, 1.0, 0.5).with_group("industry"),
    ])
    .expect("demo factor set is valid")
}

/// Parameters whose production overshoots the ceiling during a subsidy
/// window and collapses once it closes.
pub fn crash_fixture() -> DemoParams {
    DemoParams {
        price_subsidy: 2.0,
        subsidy_start: 2012.0,
        subsidy_duration: 10.0,
        investment_sensitivity: 1.0,
        construction_delay: 4.0,
        production_cost: 2.4,
        shutdown_rate: 1.0,
        demand_ceiling: 12.0,
        ..DemoParams::default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::runner::metrics::{reduce_timeseries, MetricSpec};

    #[test]
    fn no_dynamics_without_incentives() {
        let p = DemoParams {
            investment_sensitivity: 0.0,
            ..DemoParams::default()
        };
        let s = simulate_demo(&p).unwrap();
        assert_eq!(s.times.len(), 40);
        assert!(s.values.iter().all(|&v| v == p.initial_capacity));
    }

    #[test]
    fn crash_fixture_peaks_then_falls() {
        let s = simulate_demo(&crash_fixture()).unwrap();
        let peak = s.values.iter().cloned().fold(f64::MIN, f64::max);
        let last = *s.values.last().unwrap();
        assert!(peak > last * 1.2, "peak {peak}, final {last}");
    }

    #[test]
    fn states_stay_non_negative() {
        let (_, states) = simulate_states(&crash_fixture()).unwrap();
        for s in states {
            assert!(s.capacity_under_construction >= 0.0);
            assert!(s.installed_capacity >= 0.0);
            assert!(s.production >= 0.0);
        }
    }

    #[test]
    fn deterministic() {
        assert_eq!(
            simulate_demo(&crash_fixture()).unwrap(),
            simulate_demo(&crash_fixture()).unwrap()
        );
    }

    #[test]
    fn rejects_unknown_and_invalid() {
        assert!(DemoParams::from_named(&["nope".into()], &[1.0]).is_err());
        assert!(DemoParams::from_named(&["demand_ceiling".into()], &[0.0]).is_err());
        let p = DemoParams::from_named(&["price_subsidy".into()], &[1.5]).unwrap();
        assert_eq!(p.price_subsidy, 1.5);
        let bad_dt = DemoParams {
            dt: 0.0,
            ..DemoParams::default()
        };
        assert!(simulate_demo(&bad_dt).is_err());
    }

    #[test]
    fn subsidy_raises_peak_production() {
        let spec = MetricSpec::max_before("peak", "production", 2051.0);
        let mut last = f64::MIN;
        for subsidy in [0.0, 0.25, 0.5, 0.75, 1.0] {
            let p = DemoParams {
                price_subsidy: subsidy,
                subsidy_duration: 20.0,
                ..DemoParams::default()
            };
            let peak = reduce_timeseries(&simulate_demo(&p).unwrap(), &spec).unwrap();
            assert!(peak >= last, "subsidy {subsidy}: {peak} < {last}");
            last = peak;
        }
    }

    #[test]
    fn factor_names_match_fixture() {
        assert_eq!(demo_factor_set().names(), FACTOR_NAMES.map(String::from).to_vec());
        assert!(FACTOR_NAMES.iter().all(|n| DemoParams::accepts(n)));
    }
}
