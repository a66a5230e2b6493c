use proptest::prelude::*;

use sensikit::demo::{crash_fixture, demo_factor_set, simulate_demo, simulate_states, DemoParams, OVERSHOOT_TOLERANCE};
use sensikit::factors::FactorSet;

const FIXTURES: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures");

fn params(u: &[f64]) -> DemoParams {
    let fs = demo_factor_set();
    DemoParams::from_named(&fs.names(), &fs.map_to_physical(u).unwrap()).unwrap()
}

fn unit_point() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop_oneof![0.0f64..=1.0, Just(0.0), Just(1.0)], 12)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn production_respects_ceiling_at_coarse_and_fine_steps(u in unit_point()) {
        let p = params(&u);
        let fine = DemoParams { dt: p.dt / 100.0, ..p.clone() };
        for q in [&p, &fine] {
            let (series, states) = simulate_states(q).unwrap();
            let bound = q.demand_ceiling * (1.0 + OVERSHOOT_TOLERANCE);
            prop_assert!(series.values.iter().all(|&v| v <= bound + 1e-12));
            for s in &states {
                prop_assert!(s.capacity_under_construction >= 0.0);
                prop_assert!(s.installed_capacity >= 0.0);
                prop_assert!(s.production >= 0.0);
            }
        }
    }

    #[test]
    fn halving_the_step_changes_output_by_at_most_half_a_percent(u in unit_point()) {
        let p = params(&u);
        let half = DemoParams { dt: p.dt / 2.0, ..p.clone() };
        let a = simulate_demo(&p).unwrap();
        let b = simulate_demo(&half).unwrap();
        prop_assert_eq!(&a.times, &b.times);
        for (x, y) in a.values.iter().zip(&b.values) {
            prop_assert!((x - y).abs() <= 0.005 * x.abs().max(y.abs()).max(1e-9), "{} vs {}", x, y);
        }
    }
}

#[test]
fn crash_fixture_overshoot_is_converged() {
    let p = crash_fixture();
    let fine = DemoParams { dt: p.dt / 100.0, ..p.clone() };
    let a = simulate_demo(&p).unwrap();
    let b = simulate_demo(&fine).unwrap();
    let peak = |s: &[f64]| s.iter().copied().fold(f64::MIN, f64::max);
    assert!(peak(&a.values) > *a.values.last().unwrap());
    assert!((peak(&a.values) - peak(&b.values)).abs() <= 0.005 * peak(&b.values));
}

#[test]
fn demo_fixture_matches_builtin_factor_set() {
    let fixture = FactorSet::from_path(format!("{FIXTURES}/demo_factors.csv")).unwrap();
    assert_eq!(fixture, demo_factor_set());
}

#[test]
fn incentive_fixture_parses_with_groups() {
    let fs = FactorSet::from_path(format!("{FIXTURES}/incentive_factors.csv")).unwrap();
    assert_eq!(fs.k(), 10);
    let etoh = fs.factors().iter().filter(|f| f.group.as_deref() == Some("etoh")).count();
    assert_eq!(etoh, 4);
    assert_eq!(fs.get(fs.index_of("price_subsidy_etoh").unwrap()).max, 0.46);
}
