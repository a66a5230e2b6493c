mod common;

use proptest::prelude::*;

use sensikit::design::{generate_saltelli_design, Design, SaltelliConfig};
use sensikit::factors::FactorSet;
use sensikit::indices::{
    bootstrap_indices, estimate_first_order, estimate_second_order, estimate_total_effects, split_blocks,
    BlockOutputs,
};

fn blocks(k: usize, n: usize, min: f64, max: f64, f: impl Fn(&[f64]) -> f64) -> BlockOutputs {
    let fs = FactorSet::uniform(k, min, max).unwrap();
    let d: Design = generate_saltelli_design(&fs, SaltelliConfig::new(n)).unwrap().into();
    split_blocks(&d, &common::evaluate(&d, f), "y").unwrap()
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn affine_output_rescaling_leaves_indices_unchanged(
        scale in prop::sample::select(vec![-7.5, -1.0, -0.2, 0.3, 2.0, 11.0]),
        shift in -100.0f64..100.0,
        seed in 0u64..64,
    ) {
        let base = blocks(3, 128 + seed as usize, -std::f64::consts::PI, std::f64::consts::PI, common::ishigami);
        let moved = base.map(|y| scale * y + shift);
        let (s0, s1) = (estimate_first_order(&base).unwrap().unwrap(), estimate_first_order(&moved).unwrap().unwrap());
        prop_assert!(close(&s0, &s1, 1e-10), "{:?} vs {:?}", s0, s1);
        let (t0, t1) = (estimate_total_effects(&base).unwrap().unwrap(), estimate_total_effects(&moved).unwrap().unwrap());
        prop_assert!(close(&t0, &t1, 1e-10));
        let p0: Vec<f64> = estimate_second_order(&base).unwrap().unwrap().into_iter().map(|p| p.1).collect();
        let p1: Vec<f64> = estimate_second_order(&moved).unwrap().unwrap().into_iter().map(|p| p.1).collect();
        prop_assert!(close(&p0, &p1, 1e-10));
    }
}

#[test]
fn total_is_not_below_first_order_beyond_noise() {
    let g = |x: &[f64]| {
        [0.0, 1.0, 4.5, 9.0]
            .iter()
            .zip(x)
            .map(|(a, x)| ((4.0 * x - 2.0).abs() + a) / (1.0 + a))
            .product::<f64>()
    };
    let cases: Vec<BlockOutputs> = vec![
        blocks(3, 512, -std::f64::consts::PI, std::f64::consts::PI, common::ishigami),
        blocks(4, 512, 0.0, 1.0, g),
        blocks(3, 256, 0.0, 1.0, |x| x[0] * x[1] + x[2]),
    ];
    for b in &cases {
        let idx = bootstrap_indices(b, 300, 5).unwrap();
        for (s, t) in idx.first_order.iter().zip(&idx.total) {
            let eps = 3.0 * s.boot_se.unwrap().max(t.boot_se.unwrap());
            assert!(t.estimate.unwrap() >= s.estimate.unwrap() - eps, "{s:?} {t:?}");
        }
    }
}

#[test]
fn dropped_rows_are_removed_from_every_block() {
    let fs = FactorSet::uniform(2, 0.0, 1.0).unwrap();
    let d: Design = generate_saltelli_design(&fs, SaltelliConfig::new(16)).unwrap().into();
    let mut evals = common::evaluate(&d, |x| x[0] + 2.0 * x[1]);
    // poison the AB:1 row of sample 3 only
    let row = d.as_saltelli().unwrap().row_of(sensikit::design::Block::AB(1), 3);
    evals.insert(sensikit::evaluation::RunRecord::failed(row, "crashed"));
    let b = split_blocks(&d, &evals, "y").unwrap();
    assert_eq!(b.n(), 15);
    assert_eq!(b.dropped_rows, vec![3]);
    assert!(b.y_ab.iter().chain(b.y_ba.as_ref().unwrap()).all(|v| v.len() == 15));
}
