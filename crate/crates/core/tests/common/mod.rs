#![allow(dead_code)]

use std::collections::BTreeMap;

use sensikit::design::Design;
use sensikit::evaluation::{EvaluationSet, RunRecord};

/// Evaluate `f` on every design row in physical units, without the runner.
pub fn evaluate(design: &Design, f: impl Fn(&[f64]) -> f64) -> EvaluationSet {
    let factors = design.factors();
    let mut evals = EvaluationSet::new(design.content_hash());
    for (id, u) in design.points().iter().enumerate() {
        let x = factors.map_to_physical(u).unwrap();
        evals.insert(RunRecord::ok(id, BTreeMap::from([("y".to_string(), f(&x))])));
    }
    evals
}

pub fn ishigami(x: &[f64]) -> f64 {
    x[0].sin() + 7.0 * x[1].sin().powi(2) + 0.1 * x[2].powi(4) * x[0].sin()
}

/// Analytic Ishigami indices for a = 7, b = 0.1 on [-pi, pi]^3.
pub mod ishigami_exact {
    use std::f64::consts::PI;

    pub fn partials() -> (f64, f64, f64, f64) {
        let (a, b) = (7.0, 0.1);
        let v1 = 0.5 * (1.0 + b * PI.powi(4) / 5.0).powi(2);
        let v2 = a * a / 8.0;
        let v13 = 8.0 * b * b * PI.powi(8) / 225.0;
        (v1, v2, v13, v1 + v2 + v13)
    }

    pub fn s1() -> f64 {
        let (v1, _, _, v) = partials();
        v1 / v
    }

    pub fn s2() -> f64 {
        let (_, v2, _, v) = partials();
        v2 / v
    }

    pub fn s13() -> f64 {
        let (_, _, v13, v) = partials();
        v13 / v
    }

    pub fn st1() -> f64 {
        s1() + s13()
    }

    pub fn st3() -> f64 {
        s13()
    }
}
